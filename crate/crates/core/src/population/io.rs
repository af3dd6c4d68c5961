//! Line-oriented population files.
//!
//! ```text
//! M=<psu count>
//! Nh=<comma separated PSU sizes>
//! grid=<grid side, 0 when the population is not spatial>
//! seed=<generator seed>
//! h,j,y,x,z,w            one line per unit, h-major, 1-based
//! checksum=<FNV-1a 64 of every preceding byte, 16 hex digits>
//! ```

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::{Population, Unit};
use crate::error::{Error, Result};
use crate::fnv1a64;

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render_population(pop: &Population) -> String {
    let mut body = String::new();
    let sizes: Vec<String> = pop.psu_sizes().iter().map(usize::to_string).collect();
    let _ = writeln!(body, "M={}", pop.psu_count());
    let _ = writeln!(body, "Nh={}", sizes.join(","));
    let _ = writeln!(body, "grid={}", pop.grid_side());
    let _ = writeln!(body, "seed={}", pop.seed());
    for (h, psu) in pop.psus().iter().enumerate() {
        for (j, u) in psu.iter().enumerate() {
            let _ = writeln!(body, "{},{},{},{},{},{}", h + 1, j + 1, real(u.y), real(u.x), real(u.z), u8::from(u.w));
        }
    }
    let sum = fnv1a64(body.as_bytes());
    let _ = writeln!(body, "checksum={sum:016x}");
    body
}

/// Writes through a temporary file in the destination directory so a failed
/// write never leaves a partial population behind.
pub fn save_population(pop: &Population, path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(render_population(pop).as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn load_population(path: &Path) -> Result<Population> {
    parse_population(&std::fs::read_to_string(path)?)
}

fn header<'a>(line: Option<(usize, &'a str)>, key: &str) -> Result<(usize, &'a str)> {
    let (no, text) = line.ok_or_else(|| Error::Parse { line: 0, reason: format!("missing `{key}=` header") })?;
    let value = text
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::Parse { line: no, reason: format!("expected `{key}=`, found `{text}`") })?;
    Ok((no, value))
}

fn number<T: std::str::FromStr>(text: &str, line: usize, what: &str) -> Result<T> {
    text.trim().parse().map_err(|_| Error::Parse { line, reason: format!("bad {what} `{text}`") })
}

pub fn parse_population(text: &str) -> Result<Population> {
    let Some(tail_start) = text.trim_end_matches('\n').rfind('\n').map(|i| i + 1) else {
        return Err(Error::Parse { line: 1, reason: "file too short".into() });
    };
    let (body, tail) = text.split_at(tail_start);
    let expected =
        tail.trim_end().strip_prefix("checksum=").and_then(|h| u64::from_str_radix(h, 16).ok()).ok_or_else(|| {
            Error::Parse {
                line: body.lines().count() + 1,
                reason: "missing or malformed checksum line (truncated file?)".into(),
            }
        })?;
    let found = fnv1a64(body.as_bytes());
    if found != expected {
        return Err(Error::Checksum { expected, found });
    }

    let mut lines = body.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (no, m) = header(lines.next(), "M")?;
    let m: usize = number(m, no, "PSU count")?;
    let (no, sizes) = header(lines.next(), "Nh")?;
    let sizes = sizes.split(',').map(|s| number::<usize>(s, no, "PSU size")).collect::<Result<Vec<_>>>()?;
    if sizes.len() != m {
        return Err(Error::Parse { line: no, reason: format!("{} sizes listed for M={m}", sizes.len()) });
    }
    let (no, grid) = header(lines.next(), "grid")?;
    let grid: usize = number(grid, no, "grid side")?;
    let (no, seed) = header(lines.next(), "seed")?;
    let seed: u64 = number(seed, no, "seed")?;

    let mut psus: Vec<Vec<Unit>> = sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
    for (h, &n_h) in sizes.iter().enumerate() {
        for j in 0..n_h {
            let (no, line) = lines.next().ok_or_else(|| Error::Parse {
                line: body.lines().count(),
                reason: format!("expected unit ({}, {})", h + 1, j + 1),
            })?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Parse { line: no, reason: format!("expected 6 fields, found {}", fields.len()) });
            }
            let (fh, fj): (usize, usize) = (number(fields[0], no, "h")?, number(fields[1], no, "j")?);
            if (fh, fj) != (h + 1, j + 1) {
                return Err(Error::Parse {
                    line: no,
                    reason: format!("unit ({fh}, {fj}) out of order, expected ({}, {})", h + 1, j + 1),
                });
            }
            let w = match fields[5].trim() {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse { line: no, reason: format!("w must be 0 or 1, found `{other}`") }),
            };
            psus[h].push(Unit {
                y: number(fields[2], no, "y")?,
                x: number(fields[3], no, "x")?,
                z: number(fields[4], no, "z")?,
                w,
            });
        }
    }
    if let Some((no, _)) = lines.next() {
        return Err(Error::Parse { line: no, reason: "trailing data after the last unit".into() });
    }
    Population::with_layout(psus, grid, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Population {
        Population::from_psus(vec![
            vec![Unit::new(0.0, 0.1, 1.0 / 3.0), Unit::new(2.0, 1e-300, 7.0)],
            vec![Unit::new(0.5, 3.0, 0.0), Unit::new(0.0, 0.0, 0.0), Unit::new(9.0, 1.0, 2.0)],
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let pop = sample();
        let text = render_population(&pop);
        assert_eq!(parse_population(&text).unwrap(), pop);
    }

    #[test]
    fn truncated_file_rejected() {
        let text = render_population(&sample());
        let cut = &text[..text.len() / 2];
        assert!(parse_population(cut).is_err());
        let no_checksum = &text[..text.rfind("checksum").unwrap()];
        assert!(parse_population(no_checksum).is_err());
    }

    #[test]
    fn tampered_body_fails_checksum() {
        let text = render_population(&sample()).replacen("2.0000000000000000e0", "3.0000000000000000e0", 1);
        assert!(matches!(parse_population(&text), Err(Error::Checksum { .. })));
    }

    #[test]
    fn inconsistent_w_is_a_validation_error() {
        let text = render_population(&sample());
        let body_end = text.rfind("checksum").unwrap();
        // unit (1,2) has y = 2, flip its w to 0 and re-sign the body
        let body = text[..body_end].replacen("e-300,7.0000000000000000e0,1", "e-300,7.0000000000000000e0,0", 1);
        assert_ne!(body, text[..body_end]);
        let resigned = format!("{body}checksum={:016x}\n", fnv1a64(body.as_bytes()));
        assert!(matches!(parse_population(&resigned), Err(Error::InvalidPopulation(_))));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.txt");
        save_population(&sample(), &path).unwrap();
        assert_eq!(load_population(&path).unwrap(), sample());
    }

    #[test]
    fn save_into_missing_directory_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nope").join("pop.txt");
        assert!(save_population(&sample(), &path).is_err());
        assert!(!path.exists());
    }
}
