//! SVG figures rendered straight from a run's (or a sweep's) CSV files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use plotters::coord::Shift;
use plotters::prelude::*;

use dcc_core::experiment::{BINS_FILE, PDR_FILE, PIR_FILE, TRACE_FILE};
use dcc_core::sweep::INDEX_FILE;

/// PIR bins up to this distance appear in the alpha family.
const ALPHA_MAX_DISTANCE_M: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Pdr,
    Pir,
    Bins,
    Trace,
    Alpha,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Pdr => "pdr",
            Family::Pir => "pir",
            Family::Bins => "bins",
            Family::Trace => "trace",
            Family::Alpha => "alpha",
        }
    }
}

struct Table {
    path: PathBuf,
    headers: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        if !path.exists() {
            bail!("missing CSV {}", path.display());
        }
        let mut r =
            csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let headers = r.headers()?.clone();
        let rows = r.records().collect::<Result<Vec<_>, _>>()?;
        Ok(Table {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no column {name}", self.path.display()))
    }

    fn str_col(&self, name: &str) -> Result<Vec<String>> {
        let c = self.col(name)?;
        Ok(self.rows.iter().map(|r| r[c].to_owned()).collect())
    }

    /// Parses a numeric column; empty cells become `None`.
    fn num_col(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let c = self.col(name)?;
        self.rows
            .iter()
            .map(|r| {
                let v = &r[c];
                if v.is_empty() {
                    Ok(None)
                } else {
                    v.parse().map(Some).with_context(|| {
                        format!("{}: bad number {v:?} in {name}", self.path.display())
                    })
                }
            })
            .collect()
    }

    fn xy(&self, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
        Ok(self
            .num_col(x)?
            .into_iter()
            .zip(self.num_col(y)?)
            .filter_map(|(x, y)| Some((x?, y?)))
            .collect())
    }
}

struct RunDir {
    label: String,
    path: PathBuf,
    variant: String,
    density: String,
    alpha: f64,
}

/// The runs under `dir`: every successful entry of a sweep index, or the
/// directory itself when it holds a single run.
fn runs_in(dir: &Path) -> Result<Vec<RunDir>> {
    let index = dir.join(INDEX_FILE);
    if !index.exists() {
        if !dir.join(PDR_FILE).exists() {
            bail!("{} holds neither a run nor a sweep index", dir.display());
        }
        let label = dir
            .file_name()
            .map_or_else(|| "run".to_owned(), |n| n.to_string_lossy().into_owned());
        return Ok(vec![RunDir {
            label,
            path: dir.to_path_buf(),
            variant: String::new(),
            density: String::new(),
            alpha: f64::NAN,
        }]);
    }
    let t = Table::read(&index)?;
    let names = t.str_col("run_dir")?;
    let variants = t.str_col("variant")?;
    let densities = t.str_col("density")?;
    let alphas = t.num_col("alpha")?;
    let status = t.str_col("status")?;
    let runs: Vec<RunDir> = (0..names.len())
        .filter(|&i| status[i] == "ok")
        .map(|i| RunDir {
            label: names[i].clone(),
            path: dir.join(&names[i]),
            variant: variants[i].clone(),
            density: densities[i].clone(),
            alpha: alphas[i].unwrap_or(f64::NAN),
        })
        .collect();
    if runs.is_empty() {
        bail!("{} lists no successful runs", index.display());
    }
    Ok(runs)
}

type Series = (String, Vec<(f64, f64)>);

fn span(series: &[Series], pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
    let (lo, hi) = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(&pick))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi + (hi - lo) * 0.05)
    }
}

fn draw_lines(
    area: &DrawingArea<SVGBackend, Shift>,
    title: &str,
    x_desc: &str,
    y_desc: &str,
    series: &[Series],
    y_fixed: Option<(f64, f64)>,
) -> Result<()> {
    let (x0, x1) = span(series, |p| p.0);
    let (y0, y1) = y_fixed.unwrap_or_else(|| {
        let (lo, hi) = span(series, |p| p.1);
        (lo.min(0.0), hi)
    });
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(label.as_str())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
            });
    }
    if series.len() > 1 || series.first().is_some_and(|(l, _)| !l.is_empty()) {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .position(SeriesLabelPosition::UpperRight)
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
    }
    Ok(())
}

fn per_run(runs: &[RunDir], file: &str, x: &str, y: &str) -> Result<Vec<Series>> {
    runs.iter()
        .map(|r| Ok((r.label.clone(), Table::read(&r.path.join(file))?.xy(x, y)?)))
        .collect()
}

fn trace_series(run: &RunDir) -> Result<(u64, [Vec<Series>; 2])> {
    let t = Table::read(&run.path.join(TRACE_FILE))?;
    let nodes = t.num_col("node")?;
    let node = nodes
        .iter()
        .flatten()
        .map(|&n| n as u64)
        .min()
        .ok_or_else(|| anyhow!("{} is empty", t.path.display()))?;
    let keep: Vec<bool> = nodes.iter().map(|n| *n == Some(node as f64)).collect();
    let pick = |col: &str| -> Result<Vec<(f64, f64)>> {
        Ok(t.num_col("t_s")?
            .into_iter()
            .zip(t.num_col(col)?)
            .zip(&keep)
            .filter(|(_, &k)| k)
            .filter_map(|((x, y), _)| Some((x?, y?)))
            .collect())
    };
    Ok((
        node,
        [
            vec![
                ("cbr".to_owned(), pick("cbr")?),
                ("cl".to_owned(), pick("cl")?),
            ],
            vec![
                ("setting_ms".to_owned(), pick("setting_ms")?),
                ("realized_gap_ms".to_owned(), pick("realized_gap_ms")?),
            ],
        ],
    ))
}

/// Mean PIR per (variant, density) group, one series per distance bin.
fn alpha_groups(runs: &[RunDir]) -> Result<BTreeMap<(String, String), Vec<Series>>> {
    type Acc = BTreeMap<u64, BTreeMap<u64, (f64, u32)>>;
    let mut groups: BTreeMap<(String, String), Acc> = BTreeMap::new();
    for r in runs {
        if r.alpha.is_nan() {
            bail!("the alpha family needs a sweep directory");
        }
        let acc = groups
            .entry((r.variant.clone(), r.density.clone()))
            .or_default();
        for (d, pir) in Table::read(&r.path.join(PIR_FILE))?.xy("bin_center_m", "mean_pir_s")? {
            if d <= ALPHA_MAX_DISTANCE_M {
                let e = acc
                    .entry(d.round() as u64)
                    .or_default()
                    .entry((r.alpha * 1e6).round() as u64)
                    .or_default();
                e.0 += pir;
                e.1 += 1;
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|(k, acc)| {
            let series = acc
                .into_iter()
                .map(|(d, by_alpha)| {
                    let pts = by_alpha
                        .into_iter()
                        .map(|(a, (sum, n))| (a as f64 / 1e6, sum / f64::from(n)))
                        .collect();
                    (format!("{d} m"), pts)
                })
                .collect();
            (k, series)
        })
        .collect())
}

pub fn render(dir: &Path, family: Family, out: &Path) -> Result<()> {
    let runs = runs_in(dir)?;
    let backend = |h: u32| SVGBackend::new(out, (900, h)).into_drawing_area();
    match family {
        Family::Pdr => {
            let series = per_run(&runs, PDR_FILE, "bin_center_m", "pdr")?;
            let root = backend(560);
            root.fill(&WHITE)?;
            draw_lines(
                &root,
                "PDR vs distance",
                "distance (m)",
                "PDR",
                &series,
                Some((0.0, 1.02)),
            )?;
            root.present()?;
        }
        Family::Pir => {
            let series = per_run(&runs, PIR_FILE, "bin_center_m", "mean_pir_s")?;
            let root = backend(560);
            root.fill(&WHITE)?;
            draw_lines(
                &root,
                "PIR vs distance",
                "distance (m)",
                "mean PIR (s)",
                &series,
                None,
            )?;
            root.present()?;
        }
        Family::Bins => {
            let tx = per_run(&runs, BINS_FILE, "bin_start_s", "tx_count")?;
            let cbr = per_run(&runs, BINS_FILE, "bin_start_s", "mean_cbr")?;
            let root = backend(800);
            root.fill(&WHITE)?;
            let panels = root.split_evenly((2, 1));
            draw_lines(
                &panels[0],
                "Transmissions per 20 ms",
                "time (s)",
                "transmissions",
                &tx,
                None,
            )?;
            draw_lines(
                &panels[1],
                "Mean CBR per 20 ms",
                "time (s)",
                "CBR",
                &cbr,
                Some((0.0, 1.02)),
            )?;
            root.present()?;
        }
        Family::Trace => {
            let root = backend(420 * runs.len() as u32);
            root.fill(&WHITE)?;
            let rows = root.split_evenly((runs.len(), 2));
            for (i, run) in runs.iter().enumerate() {
                let (node, [load, interval]) = trace_series(run)?;
                let title = format!("{} node {node}", run.label);
                draw_lines(
                    &rows[2 * i],
                    &format!("{title}: load"),
                    "time (s)",
                    "ratio",
                    &load,
                    Some((0.0, 1.02)),
                )?;
                draw_lines(
                    &rows[2 * i + 1],
                    &format!("{title}: interval"),
                    "time (s)",
                    "ms",
                    &interval,
                    None,
                )?;
            }
            root.present()?;
        }
        Family::Alpha => {
            let groups = alpha_groups(&runs)?;
            let root = backend(480 * groups.len() as u32);
            root.fill(&WHITE)?;
            let panels = root.split_evenly((groups.len(), 1));
            for (panel, ((variant, density), series)) in panels.iter().zip(&groups) {
                let title = format!("Mean PIR vs alpha: {variant}, {density}");
                draw_lines(panel, &title, "alpha", "mean PIR (s)", series, None)?;
            }
            root.present()?;
        }
    }
    Ok(())
}
