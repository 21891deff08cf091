use crate::error::{AdError, Result};
use crate::tape::{is_suffix, Op, Var};
use crate::tensor::Tensor;

/// Reverse-mode gradient of a scalar `loss` with respect to `leaves`.
///
/// Every backward rule is built out of the same primitives as the forward
/// pass, so with `create_graph` the returned gradients stay on the tape
/// and can be differentiated again. Without `create_graph` the gradient
/// values are detached and everything recorded during this call is
/// truncated from the tape.
pub fn backward<'t>(loss: Var<'t>, leaves: &[Var<'t>], create_graph: bool) -> Result<Vec<Var<'t>>> {
    let tape = loss.tape;
    if loss.numel() != 1 {
        return Err(AdError::NonScalarLoss(loss.shape()));
    }
    for leaf in leaves {
        if !std::ptr::eq(leaf.tape, tape) {
            return Err(AdError::TapeMismatch);
        }
        if !leaf.requires_grad() {
            return Err(AdError::LeafWithoutGrad(leaf.id));
        }
    }

    // Structural reachability: every requested leaf must be an ancestor
    // of the loss. A leaf with a path but zero gradient is fine; a leaf
    // with no path is an error, never a silent zero.
    let ancestors = ancestors_of(tape, loss.id);
    for leaf in leaves {
        if !ancestors[leaf.id] {
            return Err(AdError::UnreachableLeaf(leaf.id));
        }
    }

    let mark = tape.len();
    let mut grads: Vec<Option<Var<'t>>> = vec![None; loss.id + 1];
    grads[loss.id] = Some(tape.constant(Tensor::filled(&loss.shape(), 1.0)));

    for id in (0..=loss.id).rev() {
        let Some(g) = grads[id] else { continue };
        let (op, requires_grad) = {
            let nodes = tape.nodes.borrow();
            (nodes[id].op.clone(), nodes[id].requires_grad)
        };
        if !requires_grad {
            continue;
        }
        let out = Var { tape, id };
        propagate(&op, out, g, &mut grads)?;
    }

    let mut results = Vec::with_capacity(leaves.len());
    for leaf in leaves {
        let g = match grads[leaf.id] {
            Some(g) => g,
            None => tape.constant(Tensor::zeros(&leaf.shape())),
        };
        results.push(g);
    }

    if !create_graph {
        let values: Vec<Tensor> = results.iter().map(|g| g.value()).collect();
        tape.truncate(mark);
        results = values.into_iter().map(|t| tape.constant(t)).collect();
    }
    Ok(results)
}

fn ancestors_of(tape: &crate::Tape, root: usize) -> Vec<bool> {
    let nodes = tape.nodes.borrow();
    let mut seen = vec![false; root + 1];
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if seen[id] {
            continue;
        }
        seen[id] = true;
        for input in nodes[id].op.inputs() {
            if !seen[input] {
                stack.push(input);
            }
        }
    }
    seen
}

fn accumulate<'t>(grads: &mut [Option<Var<'t>>], id: usize, contrib: Var<'t>) -> Result<()> {
    grads[id] = Some(match grads[id] {
        Some(existing) => existing.add(contrib)?,
        None => contrib,
    });
    Ok(())
}

/// Reduce a broadcast gradient back to the operand's shape.
fn reduce<'t>(g: Var<'t>, target: &[usize]) -> Result<Var<'t>> {
    let gs = g.shape();
    if gs == target {
        return Ok(g);
    }
    if target.iter().product::<usize>() == 1 {
        return g.sum_all()?.reshape(target);
    }
    if is_suffix(target, &gs) {
        return g.sum_leading(gs.len() - target.len());
    }
    unreachable!("gradient shape {:?} cannot reduce to {:?}", gs, target);
}

fn needs(tape: &crate::Tape, id: usize) -> bool {
    tape.nodes.borrow()[id].requires_grad
}

fn propagate<'t>(op: &Op, out: Var<'t>, g: Var<'t>, grads: &mut Vec<Option<Var<'t>>>) -> Result<()> {
    use Op::*;
    let tape = out.tape;
    let var = |id: usize| Var { tape, id };
    match op {
        Leaf => {}
        Add(a, b) => {
            if needs(tape, *a) {
                accumulate(grads, *a, reduce(g, &var(*a).shape())?)?;
            }
            if needs(tape, *b) {
                accumulate(grads, *b, reduce(g, &var(*b).shape())?)?;
            }
        }
        Sub(a, b) => {
            if needs(tape, *a) {
                accumulate(grads, *a, reduce(g, &var(*a).shape())?)?;
            }
            if needs(tape, *b) {
                accumulate(grads, *b, reduce(g.neg()?, &var(*b).shape())?)?;
            }
        }
        Mul(a, b) => {
            if needs(tape, *a) {
                accumulate(grads, *a, reduce(g.mul(var(*b))?, &var(*a).shape())?)?;
            }
            if needs(tape, *b) {
                accumulate(grads, *b, reduce(g.mul(var(*a))?, &var(*b).shape())?)?;
            }
        }
        Div(a, b) => {
            let (av, bv) = (var(*a), var(*b));
            if needs(tape, *a) {
                accumulate(grads, *a, reduce(g.div(bv)?, &av.shape())?)?;
            }
            if needs(tape, *b) {
                let gb = g.mul(av)?.div(bv.mul(bv)?)?.neg()?;
                accumulate(grads, *b, reduce(gb, &bv.shape())?)?;
            }
        }
        Neg(a) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.neg()?)?;
            }
        }
        Matmul(a, b) => {
            let (av, bv) = (var(*a), var(*b));
            if needs(tape, *a) {
                accumulate(grads, *a, g.matmul(bv.permute(&[1, 0])?)?)?;
            }
            if needs(tape, *b) {
                accumulate(grads, *b, av.permute(&[1, 0])?.matmul(g)?)?;
            }
        }
        Reshape(a, _) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.reshape(&var(*a).shape())?)?;
            }
        }
        Permute(a, axes) => {
            if needs(tape, *a) {
                let mut inv = vec![0usize; axes.len()];
                for (i, &x) in axes.iter().enumerate() {
                    inv[x] = i;
                }
                accumulate(grads, *a, g.permute(&inv)?)?;
            }
        }
        Slice(a, ranges) => {
            if needs(tape, *a) {
                let shape = var(*a).shape();
                let amounts: Vec<(usize, usize)> = ranges
                    .iter()
                    .zip(&shape)
                    .map(|(&(s, e), &d)| (s, d - e))
                    .collect();
                accumulate(grads, *a, g.pad(&amounts)?)?;
            }
        }
        Pad(a, amounts) => {
            if needs(tape, *a) {
                let shape = var(*a).shape();
                let ranges: Vec<(usize, usize)> = amounts
                    .iter()
                    .zip(&shape)
                    .map(|(&(b, _), &d)| (b, b + d))
                    .collect();
                accumulate(grads, *a, g.slice(&ranges)?)?;
            }
        }
        Concat(xs, axis) => {
            let mut start = 0;
            let out_shape = out.shape();
            for &x in xs {
                let xs_shape = var(x).shape();
                let extent = xs_shape[*axis];
                if needs(tape, x) {
                    let ranges: Vec<(usize, usize)> = out_shape
                        .iter()
                        .enumerate()
                        .map(|(d, &dim)| if d == *axis { (start, start + extent) } else { (0, dim) })
                        .collect();
                    accumulate(grads, x, g.slice(&ranges)?)?;
                }
                start += extent;
            }
        }
        SumAll(a) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.reshape(&[])?.broadcast_leading(&var(*a).shape())?)?;
            }
        }
        MeanAll(a) => {
            if needs(tape, *a) {
                let n = var(*a).numel() as f64;
                let scaled = g.reshape(&[])?.mul(tape.scalar(1.0 / n))?;
                accumulate(grads, *a, scaled.broadcast_leading(&var(*a).shape())?)?;
            }
        }
        SumLeading(a, k) => {
            if needs(tape, *a) {
                let lead = var(*a).shape()[..*k].to_vec();
                accumulate(grads, *a, g.broadcast_leading(&lead)?)?;
            }
        }
        BroadcastLeading(a, lead) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.sum_leading(lead.len())?)?;
            }
        }
        SumLast(a) => {
            if needs(tape, *a) {
                let n = *var(*a).shape().last().unwrap();
                accumulate(grads, *a, g.repeat_last(n)?)?;
            }
        }
        RepeatLast(a, _) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.sum_last()?)?;
            }
        }
        MaxLast(a) => {
            if needs(tape, *a) {
                let av = var(*a);
                let shape = av.shape();
                let n = *shape.last().unwrap();
                // subgradient: route to the first argmax per row
                let data = av.value().into_data();
                let mut ind = vec![0.0; data.len()];
                for (r, row) in data.chunks(n).enumerate() {
                    let mut best = 0;
                    for (i, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = i;
                        }
                    }
                    ind[r * n + best] = 1.0;
                }
                let ind = tape.constant(Tensor::new(shape.clone(), ind)?);
                accumulate(grads, *a, g.repeat_last(n)?.mul(ind)?)?;
            }
        }
        Tanh(a) => {
            if needs(tape, *a) {
                let one = tape.scalar(1.0);
                accumulate(grads, *a, g.mul(one.sub(out.mul(out)?)?)?)?;
            }
        }
        Relu(a) => {
            if needs(tape, *a) {
                let av = var(*a);
                let ind: Vec<f64> = av.value().data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                let ind = tape.constant(Tensor::new(av.shape(), ind)?);
                accumulate(grads, *a, g.mul(ind)?)?;
            }
        }
        Exp(a) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.mul(out)?)?;
            }
        }
        Ln(a) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.div(var(*a))?)?;
            }
        }
        Sqrt(a) => {
            if needs(tape, *a) {
                // d sqrt/dx = 1/(2 sqrt(x)); defined as 0 at x = 0
                let half = tape.scalar(0.5);
                accumulate(grads, *a, g.mul(out.safe_recip()?)?.mul(half)?)?;
            }
        }
        PowConst(a, p) => {
            if needs(tape, *a) {
                let av = var(*a);
                let coeff = tape.scalar(*p);
                accumulate(grads, *a, g.mul(av.powc(p - 1.0)?)?.mul(coeff)?)?;
            }
        }
        SafeRecip(a) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.mul(out.mul(out)?.neg()?)?)?;
            }
        }
        Sin(a) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.mul(var(*a).cos()?)?)?;
            }
        }
        Cos(a) => {
            if needs(tape, *a) {
                accumulate(grads, *a, g.mul(var(*a).sin()?)?.neg()?)?;
            }
        }
        Im2col { x, kh, kw } => {
            if needs(tape, *x) {
                let shape = var(*x).shape();
                let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
                accumulate(grads, *x, g.col2im(b, c, h, w, *kh, *kw)?)?;
            }
        }
        Col2im { g: gin, kh, kw, .. } => {
            if needs(tape, *gin) {
                accumulate(grads, *gin, g.im2col(*kh, *kw)?)?;
            }
        }
        AvgPool2(a) => {
            if needs(tape, *a) {
                let quarter = tape.scalar(0.25);
                accumulate(grads, *a, g.upsample2()?.mul(quarter)?)?;
            }
        }
        Upsample2(a) => {
            if needs(tape, *a) {
                let four = tape.scalar(4.0);
                accumulate(grads, *a, g.avgpool2()?.mul(four)?)?;
            }
        }
        PermuteLast(a, perm) => {
            if needs(tape, *a) {
                let mut inv = vec![0usize; perm.len()];
                for (i, &x) in perm.iter().enumerate() {
                    inv[x] = i;
                }
                accumulate(grads, *a, g.permute_last(std::sync::Arc::new(inv))?)?;
            }
        }
    }
    Ok(())
}
