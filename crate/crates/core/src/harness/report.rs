//! Evaluation reports and their text renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::combo::{ModelSelector, SensorCombo};
use crate::error::Result;
use crate::gesture::GestureLabel;

use crate::features::SampleFeatures;

use super::config::HarnessConfig;
use super::eval::{
    ablation_run, best_selector, grid, reduced_gesture_eval, reduced_tasks, users, AblationRow, CellResult, Confusion,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub combo: SensorCombo,
    pub selector: ModelSelector,
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub config_hash: String,
    pub users: Vec<u32>,
    pub grid: Vec<CellResult>,
    pub reduced: Vec<CellResult>,
    pub ablation: Option<AblationTable>,
}

impl EvalReport {
    pub fn cell(&self, combo: SensorCombo, selector: ModelSelector) -> Option<&CellResult> {
        self.grid.iter().find(|c| c.combo == combo && c.selector == selector)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per cell: `task,combo,selector,mean,sd,folds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,combo,selector,mean,sd,folds\n");
        let rows = self
            .grid
            .iter()
            .map(|c| ("grid".to_string(), c))
            .chain(self.reduced.iter().map(|c| (task_name(&c.classes), c)));
        for (task, c) in rows {
            let _ = writeln!(
                out,
                "{task},{},{},{:.2},{:.2},{}",
                c.combo.as_str(),
                c.selector.as_str(),
                c.mean,
                c.sd,
                c.folds.len()
            );
        }
        if let Some(a) = &self.ablation {
            for r in &a.rows {
                let _ = writeln!(
                    out,
                    "ablation:{},{},{},{:.2},{:.2},",
                    r.name,
                    a.combo.as_str(),
                    a.selector.as_str(),
                    r.mean,
                    r.sd
                );
            }
        }
        out
    }

    /// Combinations down, selectors across; `-` marks cells that are not valid
    /// and blanks cells that were not run.
    pub fn render_grid(&self) -> String {
        let mut out = format!("{:<10}", "");
        for s in ModelSelector::ALL {
            let _ = write!(out, "{:>14}", s.as_str());
        }
        out.push('\n');
        for combo in SensorCombo::ALL {
            let _ = write!(out, "{:<10}", combo.as_str());
            for s in ModelSelector::ALL {
                let cell = match self.cell(combo, s) {
                    _ if !s.valid_for(combo) => "-".to_string(),
                    Some(c) => format!("{:.1}±{:.1}", c.mean, c.sd),
                    None => String::new(),
                };
                let _ = write!(out, "{cell:>14}");
            }
            out.push('\n');
        }
        out
    }

    pub fn render_reduced(&self) -> String {
        let mut out = String::new();
        for c in &self.reduced {
            let _ = writeln!(
                out,
                "{:<16} {:<8} {:<6} {:.1}±{:.1}",
                task_name(&c.classes),
                c.combo.as_str(),
                c.selector.as_str(),
                c.mean,
                c.sd
            );
        }
        out
    }

    pub fn render_ablation(&self) -> String {
        let Some(a) = &self.ablation else {
            return String::new();
        };
        let mut out = format!("{} / {}\n", a.combo.as_str(), a.selector.as_str());
        for r in &a.rows {
            let _ = writeln!(out, "{:<16} {:.1}±{:.1}", r.name, r.mean, r.sd);
        }
        out
    }

    /// Summed confusion matrix of every cell.
    pub fn render_confusions(&self) -> String {
        let mut out = String::new();
        for c in self.grid.iter().chain(&self.reduced) {
            let _ = writeln!(
                out,
                "{} / {} / {}",
                c.combo.as_str(),
                c.selector.as_str(),
                task_name(&c.classes)
            );
            out.push_str(&render_confusion(&c.total_confusion(), &c.classes));
            out.push('\n');
        }
        out
    }

    /// Writes report.json, report.csv, table.txt and confusion.txt.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        let mut table = self.render_grid();
        for part in [self.render_reduced(), self.render_ablation()] {
            if !part.is_empty() {
                table.push('\n');
                table.push_str(&part);
            }
        }
        std::fs::write(dir.join("table.txt"), table)?;
        std::fs::write(dir.join("confusion.txt"), self.render_confusions())?;
        Ok(())
    }
}

/// `all` for the nine-class task, else the short names joined with `+`.
pub fn task_name(classes: &[GestureLabel]) -> String {
    if classes.len() == GestureLabel::COUNT {
        return "all".to_string();
    }
    classes.iter().map(|g| short_name(*g)).collect::<Vec<_>>().join("+")
}

fn short_name(g: GestureLabel) -> String {
    match g {
        GestureLabel::COVER_MOUTH_WITH_PALM => "G1".into(),
        GestureLabel::COVER_EAR_WITH_ARCHED_PALM => "G2".into(),
        GestureLabel::PALM_BESIDE_NOSE_AND_MOUTH => "G3".into(),
        GestureLabel::EMPTY => "E".into(),
        g => format!("g{}", g.id()),
    }
}

/// Rows are true labels, columns predictions; only the task's classes.
pub fn render_confusion(m: &Confusion, classes: &[GestureLabel]) -> String {
    let mut out = format!("{:>6}", "");
    for g in classes {
        let _ = write!(out, "{:>6}", g.id());
    }
    out.push('\n');
    for t in classes {
        let _ = write!(out, "{:>6}", t.id());
        for p in classes {
            let _ = write!(out, "{:>6}", m[t.index()][p.index()]);
        }
        out.push('\n');
    }
    out
}

/// Which parts of a report to compute. A missing combination or selector is
/// taken from the grid when one is run, else ALL-4ch / ALL-F.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalPlan {
    pub grid: bool,
    pub reduced: bool,
    pub ablation: bool,
    pub combo: Option<SensorCombo>,
    pub selector: Option<ModelSelector>,
}

impl EvalReport {
    pub fn run(features: &[SampleFeatures], cfg: &HarnessConfig, plan: &EvalPlan) -> Result<Self> {
        let eval = cfg.eval();
        let mut report = EvalReport {
            seed: cfg.seed,
            config_hash: cfg.hash(),
            users: users(features),
            ..Default::default()
        };
        if plan.grid {
            report.grid = grid(features, &eval)?;
        }
        let best_overall = report
            .grid
            .iter()
            .fold(None::<&CellResult>, |best, c| match best {
                Some(b) if b.mean >= c.mean => Some(b),
                _ => Some(c),
            })
            .map(|c| (c.combo, c.selector));
        if plan.reduced {
            let combo = plan.combo.unwrap_or(SensorCombo::All4);
            let selector = plan
                .selector
                .or_else(|| best_selector(&report.grid, combo))
                .unwrap_or(ModelSelector::AllF);
            for task in reduced_tasks() {
                report
                    .reduced
                    .push(reduced_gesture_eval(features, combo, &task, selector, &eval)?);
            }
        }
        if plan.ablation {
            let (combo, selector) = match (plan.combo, plan.selector, best_overall) {
                (Some(c), Some(s), _) => (c, s),
                (Some(c), None, _) => (c, best_selector(&report.grid, c).unwrap_or(ModelSelector::AllF)),
                (None, s, Some((c, b))) => (c, s.unwrap_or(b)),
                (None, s, None) => (SensorCombo::All4, s.unwrap_or(ModelSelector::AllF)),
            };
            report.ablation = Some(AblationTable {
                combo,
                selector,
                rows: ablation_run(features, combo, selector, &eval)?,
            });
        }
        Ok(report)
    }
}
