/// Frames voted over for one center frame: `center ± half_width`, clipped
/// to the clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VotingWindow {
    pub center: usize,
    pub half_width: usize,
    start: usize,
    end: usize,
}

impl VotingWindow {
    /// `window_size` is the full odd length `w`; the half width is `w / 2`.
    pub fn new(center: usize, window_size: usize, frames: usize) -> Self {
        assert!(center < frames, "window center {center} outside {frames} frames");
        let half_width = window_size / 2;
        Self {
            center,
            half_width,
            start: center.saturating_sub(half_width),
            end: (center + half_width).min(frames - 1),
        }
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipped_at_both_ends() {
        let w = VotingWindow::new(1, 7, 4);
        assert_eq!(w.frames(), 0..=3);
        assert!(w.contains(1));
        let w = VotingWindow::new(10, 7, 20);
        assert_eq!(w.frames(), 7..=13);
        assert_eq!(w.len(), 7);
    }
}
