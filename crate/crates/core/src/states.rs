//! Mixed-radix indexing over joint assignments of categorical variables.

/// Flattens `values` (one digit per variable) given each variable's arity.
/// The first variable is the most significant digit.
pub(crate) fn flat_index(values: &[usize], radices: &[usize]) -> usize {
    debug_assert_eq!(values.len(), radices.len());
    values
        .iter()
        .zip(radices)
        .fold(0, |acc, (&v, &r)| acc * r + v)
}

pub(crate) fn unflatten(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = index % r;
        index /= r;
    }
    out
}

/// Number of joint assignments, or `None` on overflow.
pub(crate) fn state_count(radices: &[usize]) -> Option<usize> {
    radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r))
}

/// Iterates the Cartesian product of per-variable candidate lists.
pub(crate) struct Product<'a> {
    choices: &'a [Vec<usize>],
    cursor: Vec<usize>,
    done: bool,
}

impl<'a> Product<'a> {
    pub(crate) fn new(choices: &'a [Vec<usize>]) -> Self {
        let done = choices.iter().any(Vec::is_empty);
        Product {
            choices,
            cursor: vec![0; choices.len()],
            done,
        }
    }
}

impl Iterator for Product<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let current = self
            .cursor
            .iter()
            .zip(self.choices)
            .map(|(&c, opts)| opts[c])
            .collect();
        let mut k = self.cursor.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.cursor[k] += 1;
            if self.cursor[k] < self.choices[k].len() {
                break;
            }
            self.cursor[k] = 0;
        }
        Some(current)
    }
}
