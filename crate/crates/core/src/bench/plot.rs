//! CSV tables and gnuplot scripts from a benchmark report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{BenchmarkReport, RunStatus};
use crate::error::Result;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the plot inputs into `dir` and returns the files written.
pub fn write_plot_data(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };

    let mut walls = String::from("x0,y0,x1,y1\n");
    for w in &report.walls {
        let _ = writeln!(walls, "{},{},{},{}", w[0], w[1], w[2], w[3]);
    }
    put("walls.csv".into(), walls)?;

    let mut summary = String::from("seed,status,convergence_time,position_error,ate_rmse,map_rmse,correct_room\n");
    for r in &report.runs {
        let status = match r.status {
            RunStatus::Localized => "localized",
            RunStatus::NotLocalized => "N.L.",
        };
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            r.seed,
            status,
            opt(r.convergence_time),
            opt(r.position_error),
            opt(r.ate_rmse),
            opt(r.map_rmse),
            u8::from(r.correct_room)
        );
    }
    put("summary.csv".into(), summary)?;

    let mut traj_gp = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset size ratio -1\nset terminal pngcairo size 1000,700\n",
    );
    let mut part_gp = traj_gp.clone();
    for r in &report.runs {
        let mut t = String::from("t,gt_x,gt_y,est_x,est_y\n");
        for row in &r.trajectory {
            let _ = writeln!(t, "{},{},{},{},{}", row[0], row[1], row[2], row[3], row[4]);
        }
        put(format!("traj_{}.csv", r.seed), t)?;
        let mut p = String::from("x,y,weight\n");
        for row in &r.particles {
            let _ = writeln!(p, "{},{},{}", row[0], row[1], row[2]);
        }
        put(format!("particles_{}.csv", r.seed), p)?;

        let _ = writeln!(
            traj_gp,
            "set output 'traj_{s}.png'\nset title 'seed {s}'\nplot 'walls.csv' using 1:2:($3-$1):($4-$2) with vectors nohead lc rgb 'gray' notitle, \\\n     'traj_{s}.csv' using 2:3 with lines lw 2 title 'ground truth', \\\n     'traj_{s}.csv' using 4:5 with linespoints pt 7 ps 0.6 title 'keyframes'",
            s = r.seed
        );
        let _ = writeln!(
            part_gp,
            "set output 'particles_{s}.png'\nset title 'seed {s}'\nplot 'walls.csv' using 1:2:($3-$1):($4-$2) with vectors nohead lc rgb 'gray' notitle, \\\n     'particles_{s}.csv' using 1:2 with dots lc rgb 'blue' title 'particles'",
            s = r.seed
        );
    }
    put("trajectories.gp".into(), traj_gp)?;
    put("particles.gp".into(), part_gp)?;

    let summary_gp = "set datafile separator ','\nset terminal pngcairo size 900,500\nset output 'summary.png'\nset xlabel 'seed'\nset ylabel 'meters'\nplot 'summary.csv' using 1:5 skip 1 with points pt 7 title 'ATE', \\\n     'summary.csv' using 1:6 skip 1 with points pt 5 title 'map RMSE'\n";
    put("summary.gp".into(), summary_gp.into())?;
    Ok(written)
}
