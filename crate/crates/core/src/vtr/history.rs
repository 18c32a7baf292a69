use std::collections::VecDeque;

use crate::linalg::Vector;

/// The last `l_clip = min(l, t)` observations and actions at time `t`:
/// `ys = [y_t, …, y_{t−l_clip+1}]`, `us = [u_{t−1}, …, u_{t−l_clip}]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClippedHistory {
    pub ys: Vec<Vector>,
    pub us: Vec<Vector>,
}

impl ClippedHistory {
    pub fn l_clip(&self) -> usize {
        self.ys.len()
    }

    /// `[y_t; u_{t−1}; y_{t−1}; u_{t−2}; …]`, the layout the precomputed
    /// belief maps act on.
    pub fn stacked(&self) -> Vector {
        let p = self.ys.first().map_or(0, Vector::len);
        let m = self.us.first().map_or(0, Vector::len);
        let mut out = Vector::zeros(self.l_clip() * (p + m));
        for (s, (y, u)) in self.ys.iter().zip(&self.us).enumerate() {
            let base = s * (p + m);
            out.rows_mut(base, p).copy_from(y);
            out.rows_mut(base + p, m).copy_from(u);
        }
        out
    }

    pub fn max_abs(&self) -> (f64, f64) {
        let ymax = self.ys.iter().map(|y| y.norm()).fold(0.0, f64::max);
        let umax = self.us.iter().map(|u| u.norm()).fold(0.0, f64::max);
        (ymax, umax)
    }
}

/// Rolling store of the most recent `l` observation/action pairs.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    capacity: usize,
    ys: VecDeque<Vector>,
    us: VecDeque<Vector>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            ys: VecDeque::with_capacity(capacity + 1),
            us: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Records `y_t`; must alternate with [`push_action`](Self::push_action).
    pub fn push_observation(&mut self, y: Vector) {
        self.ys.push_front(y);
        self.ys.truncate(self.capacity.max(1));
    }

    pub fn push_action(&mut self, u: Vector) {
        self.us.push_front(u);
        self.us.truncate(self.capacity);
    }

    /// Window at the current time (after `y_t` has been pushed, before `u_t`).
    pub fn window(&self) -> ClippedHistory {
        let l_clip = self.us.len().min(self.capacity).min(self.ys.len());
        ClippedHistory {
            ys: self.ys.iter().take(l_clip).cloned().collect(),
            us: self.us.iter().take(l_clip).cloned().collect(),
        }
    }

    /// Stacked form of [`window`](Self::window) without building the window.
    pub fn stacked_window(&self, p: usize, m: usize) -> (Vector, usize) {
        let l_clip = self.us.len().min(self.capacity).min(self.ys.len());
        let mut out = Vector::zeros(l_clip * (p + m));
        for s in 0..l_clip {
            let base = s * (p + m);
            out.rows_mut(base, p).copy_from(&self.ys[s]);
            out.rows_mut(base + p, m).copy_from(&self.us[s]);
        }
        (out, l_clip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn window_grows_then_clips() {
        let mut h = HistoryBuffer::new(2);
        h.push_observation(v(0.0));
        assert_eq!(h.window().l_clip(), 0);
        h.push_action(v(10.0));
        h.push_observation(v(1.0));
        let w = h.window();
        assert_eq!(w.ys, vec![v(1.0)]);
        assert_eq!(w.us, vec![v(10.0)]);
        for t in 2..5 {
            h.push_action(v(10.0 + t as f64 - 1.0));
            h.push_observation(v(t as f64));
        }
        let w = h.window();
        assert_eq!(w.ys, vec![v(4.0), v(3.0)]);
        assert_eq!(w.us, vec![v(13.0), v(12.0)]);
        assert_eq!(w.stacked().as_slice(), &[4.0, 13.0, 3.0, 12.0]);
        let (s, l) = h.stacked_window(1, 1);
        assert_eq!(l, 2);
        assert_eq!(s, w.stacked());
    }
}
