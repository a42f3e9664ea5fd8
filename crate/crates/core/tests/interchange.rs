use cdcl_core::error::ErrorCategory;
use cdcl_core::interchange::{
    load_embeddings, load_instances, write_embeddings, write_instances, EmbeddingTable, InstanceEmbeddings,
};
use cdcl_core::synthetic::{synthetic_dataset, SyntheticConfig};

fn record(out: &mut Vec<u8>, id: &str, slot: u8, ordinal: u32, v: &[f32]) {
    out.extend((id.len() as u32).to_le_bytes());
    out.extend(id.as_bytes());
    out.push(slot);
    out.extend(ordinal.to_le_bytes());
    out.extend((v.len() as u32).to_le_bytes());
    for x in v {
        out.extend(x.to_le_bytes());
    }
}

#[test]
fn instances_round_trip_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.jsonl");
    let data = synthetic_dataset(&SyntheticConfig { groups: 3, edus_per_doc: 4, seed: 1 });
    write_instances(&path, &data).unwrap();
    let back = load_instances(&path).unwrap();
    assert_eq!(back, data);
}

#[test]
fn embeddings_round_trip_exactly_for_f32_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.emb");
    let data = synthetic_dataset(&SyntheticConfig { groups: 2, edus_per_doc: 3, seed: 4 });
    let table = EmbeddingTable::from_hash(&data, 8, 0).unwrap();
    write_embeddings(&path, &table).unwrap();
    assert!(dir.path().join("toy.emb.idx.json").exists());
    let back = load_embeddings(&path, &data).unwrap();
    assert_eq!(back.dim(), 8);
    for inst in &data {
        let (a, b) = (table.get(&inst.id).unwrap(), back.get(&inst.id).unwrap());
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (*p as f32) as f64 == *q);
        assert!(close(&a.hypothesis, &b.hypothesis));
        assert!(a.doc1.iter().zip(&b.doc1).all(|(x, y)| close(x, y)));
        assert!(a.doc2.iter().zip(&b.doc2).all(|(x, y)| close(x, y)));
    }
    // a second write of the loaded table is byte-identical
    let again = dir.path().join("again.emb");
    write_embeddings(&again, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn hand_written_container_loads() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_dataset(&SyntheticConfig { groups: 1, edus_per_doc: 1, seed: 2 });
    let inst = &data[0];
    let mut bytes = b"CDCLEMB1".to_vec();
    bytes.extend(2u32.to_le_bytes());
    record(&mut bytes, &inst.id, 2, 0, &[0.5, -1.0]);
    record(&mut bytes, &inst.id, 0, 1, &[1.0, 0.25]);
    record(&mut bytes, &inst.id, 1, 1, &[0.0, 2.0]);
    let path = dir.path().join("hand.emb");
    std::fs::write(&path, &bytes).unwrap();
    let table = load_embeddings(&path, &data[..1]).unwrap();
    let e = table.get(&inst.id).unwrap();
    assert_eq!(e.hypothesis, vec![0.5, -1.0]);
    assert_eq!(e.doc1, vec![vec![1.0, 0.25]]);
    assert_eq!(e.doc2, vec![vec![0.0, 2.0]]);

    // dropping the hypothesis record is reported, not defaulted
    let mut missing = b"CDCLEMB1".to_vec();
    missing.extend(2u32.to_le_bytes());
    record(&mut missing, &inst.id, 0, 1, &[1.0, 0.25]);
    record(&mut missing, &inst.id, 1, 1, &[0.0, 2.0]);
    std::fs::write(&path, &missing).unwrap();
    let err = load_embeddings(&path, &data[..1]).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Validation);
    assert!(err.to_string().contains("hypothesis"), "{err}");

    // a record narrower than the header width
    let mut mixed = b"CDCLEMB1".to_vec();
    mixed.extend(2u32.to_le_bytes());
    record(&mut mixed, &inst.id, 2, 0, &[0.5]);
    std::fs::write(&path, &mixed).unwrap();
    assert!(load_embeddings(&path, &data[..1]).is_err());

    std::fs::write(&path, b"NOTEMBED\x02\x00\x00\x00").unwrap();
    assert!(load_embeddings(&path, &data[..1]).is_err());
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_embeddings(&path, &data[..1]).is_err());
}

#[test]
fn table_rejects_mixed_widths() {
    let mut table = EmbeddingTable::new(3);
    let ok = InstanceEmbeddings { doc1: vec![vec![0.0; 3]], doc2: vec![vec![1.0; 3]], hypothesis: vec![0.5; 3] };
    table.insert("a", ok.clone()).unwrap();
    let bad = InstanceEmbeddings { doc1: vec![vec![0.0; 4]], ..ok };
    assert!(table.insert("b", bad).is_err());
    assert_eq!(table.len(), 1);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_instances("/nonexistent/never.jsonl").unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Io);
}
