use super::params::BoundParams;
use crate::autodiff::{Array, Tape, Var};
use crate::error::{Error, Result};

/// Floor applied before taking logs of probabilities.
pub const LOG_FLOOR: f64 = 1e-12;

/// Graph-level vector: mean of the node rows.
pub fn pool(tape: &mut Tape, h: Var) -> Result<Var> {
    tape.row_mean(h)
}

/// `x Wᵀ + b`.
pub fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let w_t = tape.transpose(w)?;
    let y = tape.matmul(x, w_t)?;
    tape.add(y, b)
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierOutput {
    pub logits: Var,
    pub probs: Var,
    /// Hidden activation of the MLP, `1 × mlp_hidden`.
    pub hidden: Var,
}

/// Three-way classifier over `h_graph ⊕ h_hyp`.
pub fn classify(tape: &mut Tape, params: &BoundParams, h_graph: Var, h_hyp: Var) -> Result<ClassifierOutput> {
    let l = &params.layout;
    let x = tape.concat_cols(&[h_graph, h_hyp])?;
    let pre = affine(tape, x, params.var(l.cls_w1), params.var(l.cls_b1))?;
    let hidden = tape.elu(pre)?;
    let logits = affine(tape, hidden, params.var(l.cls_w2), params.var(l.cls_b2))?;
    let probs = tape.softmax_rows(logits)?;
    Ok(ClassifierOutput { logits, probs, hidden })
}

/// `−log p_gold` with the probability floored.
pub fn cross_entropy(tape: &mut Tape, probs: Var, gold: usize) -> Result<Var> {
    let (_, c) = tape.shape(probs);
    if gold >= c {
        return Err(Error::InvalidArgument(format!("gold class {gold} outside {c} classes")));
    }
    let p = tape.slice_cols(probs, gold, gold + 1)?;
    let lp = tape.log(p, LOG_FLOOR)?;
    tape.neg(lp)
}

fn hinge(tape: &mut Tape, closer: Var, farther: Var, margin: f64) -> Result<Var> {
    let diff = tape.sub(closer, farther)?;
    let m = tape.constant(Array::scalar(margin))?;
    let shifted = tape.add(diff, m)?;
    tape.relu(shifted)
}

/// `max(0, d(a,p) − d(a,n) + σ) + max(0, d(a,neu) − d(a,n) + θ)`.
pub fn triplet_loss(
    tape: &mut Tape,
    anchor: Var,
    pos: Var,
    neu: Var,
    neg: Var,
    sigma: f64,
    theta: f64,
) -> Result<Var> {
    let d_pos = tape.euclidean_dist(anchor, pos)?;
    let d_neu = tape.euclidean_dist(anchor, neu)?;
    let d_neg = tape.euclidean_dist(anchor, neg)?;
    let a = hinge(tape, d_pos, d_neg, sigma)?;
    let b = hinge(tape, d_neu, d_neg, theta)?;
    tape.add(a, b)
}

/// `γ·L_exp + λ·(L_cls + L_trip)`.
pub fn total_loss(tape: &mut Tape, l_exp: Var, l_cls: Var, l_trip: Var, gamma: f64, lambda: f64) -> Result<Var> {
    let e = tape.scale(l_exp, gamma)?;
    let ct = tape.add(l_cls, l_trip)?;
    let ct = tape.scale(ct, lambda)?;
    tape.add(e, ct)
}

/// Plain-value form of [`cross_entropy`].
pub fn cross_entropy_value(probs: &[f64], gold: usize) -> f64 {
    -probs[gold].max(LOG_FLOOR).ln()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Plain-value form of [`triplet_loss`].
pub fn triplet_loss_value(anchor: &[f64], pos: &[f64], neu: &[f64], neg: &[f64], sigma: f64, theta: f64) -> f64 {
    let dn = dist(anchor, neg);
    (dist(anchor, pos) - dn + sigma).max(0.0) + (dist(anchor, neu) - dn + theta).max(0.0)
}

/// Plain-value form of [`total_loss`].
pub fn total_loss_value(l_exp: f64, l_cls: f64, l_trip: f64, gamma: f64, lambda: f64) -> f64 {
    gamma * l_exp + lambda * (l_cls + l_trip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_examples() {
        assert!((cross_entropy_value(&[1.0 / 3.0; 3], 0) - 3f64.ln()).abs() < 1e-12);
        assert!((3f64.ln() - 1.0986123).abs() < 1e-7);
        assert!((cross_entropy_value(&[0.0, 1.0, 0.0], 0) - (1e12f64).ln()).abs() < 1e-9);

        let mut tape = Tape::new();
        let p = tape.param(Array::row_vector(vec![0.2, 0.5, 0.3])).unwrap();
        let l = cross_entropy(&mut tape, p, 1).unwrap();
        assert!((tape.value(l).item() - 0.5f64.ln().abs()).abs() < 1e-12);
        assert!(cross_entropy(&mut tape, p, 3).is_err());
    }

    #[test]
    fn triplet_examples() {
        let z = [0.0, 0.0];
        // ordered: d(a,p)=1, d(a,neu)=2, d(a,n)=3
        assert_eq!(triplet_loss_value(&z, &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0], 1.0, 0.5), 0.0);
        // all coincide: σ + θ
        assert_eq!(triplet_loss_value(&z, &z, &z, &z, 1.0, 0.5), 1.5);
        // inverted: d(a,p)=3, d(a,neu)=3, d(a,n)=1 → 3 + 2.5
        assert_eq!(triplet_loss_value(&z, &[3.0, 0.0], &[0.0, 3.0], &[1.0, 0.0], 1.0, 0.5), 5.5);

        let mut tape = Tape::new();
        let v = |t: &mut Tape, x: f64| t.param(Array::row_vector(vec![x, 0.0])).unwrap();
        let (a, p, u, n) = (v(&mut tape, 0.0), v(&mut tape, 3.0), v(&mut tape, 2.0), v(&mut tape, 0.5));
        let l = triplet_loss(&mut tape, a, p, u, n, 1.0, 0.5).unwrap();
        assert!((tape.value(l).item() - 5.5).abs() < 1e-12);
    }

    #[test]
    fn total_loss_examples() {
        assert!((total_loss_value(1.0, 1.0, 0.0, 0.2, 0.8) - 1.0).abs() < 1e-12);
        assert_eq!(total_loss_value(0.0, 0.0, 0.0, 0.2, 0.8), 0.0);
        assert!((total_loss_value(0.0, 2.0, 3.0, 0.2, 0.8) - 4.0).abs() < 1e-12);
        let mut tape = Tape::new();
        let s = |t: &mut Tape, x: f64| t.constant(Array::scalar(x)).unwrap();
        let (e, c, tr) = (s(&mut tape, 1.0), s(&mut tape, 1.0), s(&mut tape, 0.0));
        let l = total_loss(&mut tape, e, c, tr, 0.2, 0.8).unwrap();
        assert!((tape.value(l).item() - 1.0).abs() < 1e-12);
    }
}
