use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::pipeline::{LogEntry, RunReport, TraceRow};
use super::plot::{line_plot, Series};
use super::{HarnessError, RunOutput};
use crate::grid::GridCase;
use crate::pp::group_aggregate;

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::io(path, std::io::Error::other(e))
}

/// Writes the split log: one line per selected splitting action.
pub fn write_split_log<W: Write>(report: &RunReport, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_detect", "t_split", "scenario", "group", "cutset"])?;
    if let (Some(d), Some(s), Some(sp)) = (&report.detection, &report.selection, &report.split) {
        let group: Vec<String> = s.group.iter().map(u32::to_string).collect();
        w.write_record([
            d.t.to_string(),
            sp.t_split.to_string(),
            s.scenario.to_string(),
            group.join(" "),
            s.cutset.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_indices(path: &Path, trace: &[TraceRow]) -> Result<(), HarnessError> {
    let err = csv_err(path);
    let mut w = csv_writer(path)?;
    let m = trace.first().map_or(0, |r| r.wk_i.len());
    let mut header = vec!["t".to_string(), "islands".into(), "wk_max".into(), "gamma".into(), "delta_max_deg".into()];
    header.extend((1..=m).map(|i| format!("delta_tilde_{i}")));
    header.extend((1..=m).map(|i| format!("omega_tilde_{i}")));
    header.extend((1..=m).map(|i| format!("wk_{i}")));
    w.write_record(&header).map_err(&err)?;
    for r in trace {
        let mut rec = vec![
            r.t.to_string(),
            r.islands.to_string(),
            r.wk_max.to_string(),
            r.gamma.to_string(),
            r.delta_max_deg.to_string(),
        ];
        rec.extend(r.delta_tilde_deg.iter().map(f64::to_string));
        rec.extend(r.omega_tilde.iter().map(f64::to_string));
        rec.extend(r.wk_i.iter().map(f64::to_string));
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_logs(dir: &Path, log: &[LogEntry]) -> Result<(), HarnessError> {
    let events = dir.join("events.csv");
    let alarms = dir.join("alarms.csv");
    let (ee, ae) = (csv_err(&events), csv_err(&alarms));
    let mut ev = csv_writer(&events)?;
    let mut al = csv_writer(&alarms)?;
    ev.write_record(["t", "island", "path", "i_max", "j_max", "delta_max_deg"])
        .map_err(&ee)?;
    al.write_record(["t", "kind", "group_or_machine", "kappa"]).map_err(&ae)?;
    for entry in log {
        match entry {
            LogEntry::Oos(e) => {
                ev.write_record([
                    e.t.to_string(),
                    e.island.to_string(),
                    e.path.as_str().to_string(),
                    (e.i_max + 1).to_string(),
                    (e.j_max + 1).to_string(),
                    e.delta_max_deg.to_string(),
                ])
                .map_err(&ee)?;
                if let Some(g) = &e.group {
                    let g: Vec<String> = g.iter().map(|i| (i + 1).to_string()).collect();
                    al.write_record([e.t.to_string(), "pp-oos".into(), g.join(" "), String::new()])
                        .map_err(&ae)?;
                }
            }
            LogEntry::Undamped(a) => {
                al.write_record([
                    a.t.to_string(),
                    "undamped-alarm".into(),
                    (a.machine + 1).to_string(),
                    a.kappa.to_string(),
                ])
                .map_err(&ae)?;
            }
        }
    }
    ev.flush().map_err(|e| HarnessError::io(&events, e))?;
    al.flush().map_err(|e| HarnessError::io(&alarms, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn write_plots(dir: &Path, out: &RunOutput, case: &GridCase) -> Result<(), HarnessError> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| HarnessError::io(&plots, e))?;
    let trace = &out.trace;
    let m = trace.first().map_or(0, |r| r.wk_i.len());
    let per_machine = |f: &dyn Fn(&TraceRow, usize) -> f64| -> Vec<Series> {
        (0..m)
            .map(|i| Series {
                name: format!("G{}", i + 1),
                points: trace.iter().map(|r| (r.t, f(r, i))).collect(),
            })
            .collect()
    };
    let one = |name: &str, f: &dyn Fn(&TraceRow) -> f64| Series {
        name: name.to_string(),
        points: trace.iter().map(|r| (r.t, f(r))).collect(),
    };
    let mut figures = vec![
        ("angles.svg", "COI angles", "deg", per_machine(&|r, i| r.delta_tilde_deg[i])),
        ("speeds.svg", "COI speed deviations", "p.u.", per_machine(&|r, i| r.omega_tilde[i])),
        ("wk_machines.svg", "Machine kinetic energy", "W_K,i", per_machine(&|r, i| r.wk_i[i])),
        ("wk.svg", "Largest island kinetic energy", "W_K", vec![one("W_K", &|r| r.wk_max)]),
        ("gamma.svg", "Gamma index", "gamma", vec![one("gamma", &|r| r.gamma)]),
        ("delta_max.svg", "Largest angle separation", "deg", vec![one("delta_max", &|r| r.delta_max_deg)]),
    ];
    let frames = &out.stream.frames;
    let theta: Vec<Series> = case
        .branches
        .iter()
        .enumerate()
        .map(|(k, b)| Series {
            name: b.label(),
            points: frames
                .iter()
                .filter_map(|f| f.theta_deg[k].map(|v| (f.t, v)))
                .collect(),
        })
        .collect();
    figures.push(("theta.svg", "Branch angle differences", "deg", theta));
    let vmag: Vec<Series> = case
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| Series {
            name: b.id.to_string(),
            points: frames.iter().map(|f| (f.t, f.vmag[k])).collect(),
        })
        .collect();
    figures.push(("vmag.svg", "Bus voltage magnitudes", "p.u.", vmag));
    for (file, title, ylabel, series) in &figures {
        write_text(&plots.join(file), &line_plot(title, "t [s]", ylabel, series))?;
    }
    if let Some(sel) = &out.report.selection {
        let group: Vec<usize> = sel.group.iter().map(|&i| i as usize - 1).collect();
        let all: Vec<usize> = (0..m).collect();
        let inertias = case.inertias();
        let points: Vec<(f64, f64)> = trace
            .iter()
            .map(|r| {
                let d: Vec<f64> = r.delta_tilde_deg.iter().map(|x| x.to_radians()).collect();
                let (da, wa) = group_aggregate(&d, &r.omega_tilde, &group, &all, &inertias);
                (da.to_degrees(), wa)
            })
            .collect();
        let series = vec![Series {
            name: format!("CGG {}", sel.scenario),
            points,
        }];
        write_text(
            &plots.join("portrait.svg"),
            &line_plot("Phase portrait of the selected group", "delta_A [deg]", "omega_A [p.u.]", &series),
        )?;
    }
    Ok(())
}

/// Writes the report, the PMU stream, traces, logs and plots into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput, case: &GridCase) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let report = serde_json::to_string_pretty(&out.report).map_err(|e| HarnessError::Config(e.to_string()))?;
    write_text(&dir.join("report.json"), &(report + "\n"))?;
    let stream_path = dir.join("stream.csv");
    out.stream.write_csv(create(&stream_path)?)?;
    write_indices(&dir.join("indices.csv"), &out.trace)?;
    write_logs(dir, &out.log)?;
    let split_path = dir.join("splits.csv");
    write_split_log(&out.report, create(&split_path)?).map_err(csv_err(&split_path))?;
    write_plots(dir, out, case)
}
