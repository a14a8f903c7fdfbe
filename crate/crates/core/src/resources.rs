//! Process resource accounting from `/proc` (Linux only).

use std::fs;

/// Reset the peak resident set size so a later [`peak_rss_mb`] reflects only
/// work done after this call. Returns false when unsupported.
pub fn reset_peak_rss() -> bool {
    fs::write("/proc/self/clear_refs", "5").is_ok()
}

/// Peak resident set size in MiB, or `None` when it cannot be read.
pub fn peak_rss_mb() -> Option<f64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}
