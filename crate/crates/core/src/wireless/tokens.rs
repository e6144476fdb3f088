use super::{ProblemInstance, Sizes, TaskKind};
use crate::error::{invalid, Result};
use crate::pe_modules::{TokenBatch, TokenLayout};
use crate::permutations::SetStructure;

fn layout(task: TaskKind, s: &Sizes) -> TokenLayout {
    match task {
        TaskKind::MuMiso | TaskKind::Estimation | TaskKind::Wideband => TokenLayout::Flat { n_tokens: s.k },
        TaskKind::MuMimo => TokenLayout::Nested { n_sub: s.k, n_s: s.n_r },
        TaskKind::CoordinatedBeamforming | TaskKind::PowerAllocation => TokenLayout::MultiRep {
            n_reps: s.m,
            n_sub: s.m,
            n_s: s.k,
        },
    }
}

/// Set structure of the token axis of a task.
pub fn token_structure(task: TaskKind, s: &Sizes) -> SetStructure {
    layout(task, s).token_structure()
}

/// Token representations for a batch of instances of one task and size.
///
/// Every block holds `[Re, Im]` of one channel entry, so the feature-major
/// width of a channel token is the real parts of all antennas followed by
/// the imaginary parts. Power allocation tokens hold `[|g|, |g|²]` of the
/// equivalent channel, with base station `m'` as the representation and its
/// beams as blocks. Wideband batches put each resource block in its own
/// group (`batch` of the result is instances times blocks).
pub fn build_tokens(instances: &[ProblemInstance]) -> Result<TokenBatch> {
    let first = match instances.first() {
        Some(f) => f,
        None => return invalid("no instances"),
    };
    let (task, s) = (first.task, first.sizes);
    if instances.iter().any(|i| i.task != task || i.sizes != s) {
        return invalid("token batches hold one task at one size");
    }
    let mut data = Vec::new();
    let push = |data: &mut Vec<f64>, z: num_complex::Complex64| {
        data.push(z.re);
        data.push(z.im);
    };
    match task {
        TaskKind::MuMiso | TaskKind::Estimation | TaskKind::MuMimo => {
            let cols = if task == TaskKind::MuMimo { s.k * s.n_r } else { s.k };
            for i in instances {
                for c in 0..cols {
                    for n in 0..s.n_t {
                        push(&mut data, i.h.get(n, c));
                    }
                }
            }
            TokenBatch::new(layout(task, &s), instances.len(), s.n_t, 2, data)
        }
        TaskKind::Wideband => {
            for i in instances {
                for b in 0..s.n_rb {
                    for k in 0..s.k {
                        for n in 0..s.n_t {
                            push(&mut data, i.h.get(n, b * s.k + k));
                        }
                    }
                }
            }
            TokenBatch::new(layout(task, &s), instances.len() * s.n_rb, s.n_t, 2, data)
        }
        TaskKind::CoordinatedBeamforming => {
            for i in instances {
                for bs in 0..s.m {
                    for u in 0..s.m * s.k {
                        for n in 0..s.n_t {
                            push(&mut data, i.h.get(bs * s.n_t + n, u));
                        }
                    }
                }
            }
            TokenBatch::new(layout(task, &s), instances.len(), s.n_t, 2, data)
        }
        TaskKind::PowerAllocation => {
            for i in instances {
                for bs in 0..s.m {
                    for u in 0..s.m * s.k {
                        for j in 0..s.k {
                            let a = i.h.get(bs * s.k + j, u).norm();
                            data.push(a);
                            data.push(a * a);
                        }
                    }
                }
            }
            TokenBatch::new(layout(task, &s), instances.len(), s.k, 2, data)
        }
    }
}
