use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{pair_yield, Basis, ChannelParams};
use crate::error::{Error, Result};
use crate::source_model::{Source, SourceEnsemble};

/// Observed data of one two-pulse source `lr`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub alice: Source,
    pub bob: Source,
    pub basis: Basis,
    /// Number of pulse pairs emitted by this source, `p_l p_r N_t`.
    pub emitted: f64,
    /// Number of successful events `N_lr`.
    pub counts: u64,
    /// Number of erroneous successful events `M_lr`.
    pub errors: u64,
}

impl PairRecord {
    /// Counting rate `S_lr = N_lr / L_lr`.
    pub fn rate(&self) -> f64 {
        self.counts as f64 / self.emitted
    }

    /// Error counting rate `T_lr = M_lr / L_lr`.
    pub fn error_rate(&self) -> f64 {
        self.errors as f64 / self.emitted
    }

    /// Whether the key-rate analysis consumes this source.
    pub fn used(&self) -> bool {
        PairObservables::USED.contains(&(self.alice, self.bob))
    }
}

/// Counts and error counts of all sixteen two-pulse sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairObservables {
    pub total_pairs: f64,
    records: Vec<PairRecord>,
}

fn basis_of(alice: Source, bob: Source) -> Basis {
    match (alice == Source::Z, bob == Source::Z) {
        (true, true) => Basis::Z,
        (false, false) => Basis::X,
        (true, false) => Basis::ZX,
        (false, true) => Basis::XZ,
    }
}

fn slot(alice: Source, bob: Source) -> usize {
    4 * alice.index() + bob.index()
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    l: String,
    r: String,
    basis: String,
    #[serde(rename = "L_lr")]
    emitted: f64,
    #[serde(rename = "N_lr")]
    counts: u64,
    #[serde(rename = "M_lr")]
    errors: u64,
}

impl PairObservables {
    /// The eight sources the analysis reads.
    pub const USED: [(Source, Source); 8] = [
        (Source::V, Source::V),
        (Source::V, Source::X),
        (Source::X, Source::V),
        (Source::V, Source::Y),
        (Source::Y, Source::V),
        (Source::X, Source::X),
        (Source::Y, Source::Y),
        (Source::Z, Source::Z),
    ];

    /// Assembles observables from sixteen records in any order.
    pub fn from_records(total_pairs: f64, records: Vec<PairRecord>) -> Result<Self> {
        if records.len() != 16 {
            return Err(Error::domain(format!(
                "expected 16 pair records, got {}",
                records.len()
            )));
        }
        let mut ordered: Vec<Option<PairRecord>> = vec![None; 16];
        for rec in records {
            if rec.errors > rec.counts {
                return Err(Error::domain(format!(
                    "source {}{}: error count {} exceeds count {}",
                    rec.alice, rec.bob, rec.errors, rec.counts
                )));
            }
            if (rec.counts as f64) > rec.emitted + 0.5 {
                return Err(Error::domain(format!(
                    "source {}{}: count {} exceeds emitted pairs {}",
                    rec.alice, rec.bob, rec.counts, rec.emitted
                )));
            }
            let i = slot(rec.alice, rec.bob);
            if ordered[i].replace(rec).is_some() {
                return Err(Error::domain(format!(
                    "duplicate record for source {}{}",
                    rec.alice, rec.bob
                )));
            }
        }
        let records = ordered
            .into_iter()
            .map(|r| r.expect("16 distinct slots"))
            .collect();
        Ok(PairObservables {
            total_pairs,
            records,
        })
    }

    pub fn get(&self, alice: Source, bob: Source) -> &PairRecord {
        &self.records[slot(alice, bob)]
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    /// Observed Z-basis quantum bit error rate `E_zz = M_zz / N_zz`.
    pub fn qber_zz(&self) -> f64 {
        let zz = self.get(Source::Z, Source::Z);
        if zz.counts == 0 {
            0.0
        } else {
            zz.errors as f64 / zz.counts as f64
        }
    }

    /// Same data with every count and emitted number multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| PairRecord {
                emitted: r.emitted * factor,
                counts: (r.counts as f64 * factor).round_ties_even() as u64,
                errors: (r.errors as f64 * factor).round_ties_even() as u64,
                ..*r
            })
            .collect();
        PairObservables {
            total_pairs: self.total_pairs * factor,
            records,
        }
    }

    /// Writes the table as CSV with columns `l, r, basis, L_lr, N_lr, M_lr`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(CsvRow {
                l: r.alice.label().to_string(),
                r: r.bob.label().to_string(),
                basis: r.basis.label().to_string(),
                emitted: r.emitted,
                counts: r.counts,
                errors: r.errors,
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let mut records = Vec::with_capacity(16);
        for (i, row) in rd.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| Error::Io(format!("row {}: {e}", i + 1)))?;
            let source = |s: &str| {
                Source::from_label(s)
                    .ok_or_else(|| Error::Io(format!("row {}: unknown source {s:?}", i + 1)))
            };
            let alice = source(&row.l)?;
            let bob = source(&row.r)?;
            let basis = Basis::from_label(&row.basis).ok_or_else(|| {
                Error::Io(format!("row {}: unknown basis {:?}", i + 1, row.basis))
            })?;
            if basis != basis_of(alice, bob) {
                return Err(Error::Io(format!(
                    "row {}: basis {} inconsistent with source {alice}{bob}",
                    i + 1,
                    row.basis
                )));
            }
            records.push(PairRecord {
                alice,
                bob,
                basis,
                emitted: row.emitted,
                counts: row.counts,
                errors: row.errors,
            });
        }
        let total = records.iter().map(|r| r.emitted).sum();
        PairObservables::from_records(total, records)
    }
}

/// Expected observations of an honest run: every source emits
/// `L_lr = p_l p_r N_t` pairs at its typical intensity and the counts are the
/// model gains times `L_lr`, rounded half-to-even.
pub fn build_observables(
    ensemble: &SourceEnsemble,
    params: &ChannelParams,
) -> Result<PairObservables> {
    ensemble.validate()?;
    params.validate()?;
    let mut records = Vec::with_capacity(16);
    for alice in Source::ALL {
        for bob in Source::ALL {
            let basis = basis_of(alice, bob);
            let emitted = ensemble.alice.probability(alice)
                * ensemble.bob.probability(bob)
                * params.total_pairs;
            let y = pair_yield(
                ensemble.alice.typical_intensity(alice),
                ensemble.bob.typical_intensity(bob),
                basis,
                params,
            )?;
            let counts = (emitted * y.gain).round_ties_even() as u64;
            let errors = ((emitted * y.error_gain).round_ties_even() as u64).min(counts);
            records.push(PairRecord {
                alice,
                bob,
                basis,
                emitted,
                counts,
                errors,
            });
        }
    }
    PairObservables::from_records(params.total_pairs, records)
}
