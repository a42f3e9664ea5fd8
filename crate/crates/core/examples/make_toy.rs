//! Writes a seeded synthetic instance file, plus a hash-embedding container when
//! a width is given.
//!
//! cargo run --example make_toy -- OUT.jsonl [GROUPS] [EDUS_PER_DOC] [SEED] [EMB_DIM]

use cdcl_core::interchange::{write_embeddings, write_instances, EmbeddingTable};
use cdcl_core::synthetic::{synthetic_dataset, SyntheticConfig};

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(out) = args.first() else {
        eprintln!("usage: make_toy OUT.jsonl [GROUPS] [EDUS_PER_DOC] [SEED] [EMB_DIM]");
        std::process::exit(2);
    };
    let cfg = SyntheticConfig { groups: arg(&args, 1, 20), edus_per_doc: arg(&args, 2, 4), seed: arg(&args, 3, 0) };
    let data = synthetic_dataset(&cfg);
    if let Err(e) = write_instances(out, &data) {
        eprintln!("{e}");
        std::process::exit(1);
    }
    let dim: usize = arg(&args, 4, 0);
    if dim > 0 {
        let path = format!("{out}.emb");
        let written = EmbeddingTable::from_hash(&data, dim, cfg.seed).and_then(|t| write_embeddings(&path, &t));
        if let Err(e) = written {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
    println!("{} instances in {} groups", data.len(), cfg.groups);
}
