use std::collections::{BTreeMap, BTreeSet};

use crate::datastore::{
    filter_manifest, resize_bilinear, select_bands, BandCombination, BandStack, BandStats, Manifest, ManifestFilter, Satellite,
};
use crate::error::{Error, Result};
use crate::sampler::{assemble_sequence, stack_chips, stack_sequences, Chip, SampleBatch, SequenceSample};

/// All observations of one parcel-season, band-selected, resized to the
/// sensor's chip size and date-sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ParcelSeason {
    pub parcel_id: String,
    pub season_id: String,
    pub label: usize,
    pub stacks: Vec<BandStack>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub satellite: Satellite,
    pub combo: BandCombination,
    pub classes: Vec<String>,
    pub items: Vec<ParcelSeason>,
}

/// Sorted distinct labels of `satellite`'s records.
pub fn class_list(manifest: &Manifest, satellite: Satellite) -> Vec<String> {
    let set: BTreeSet<&str> = manifest.records.iter().filter(|r| r.satellite == satellite).map(|r| r.label.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

impl Dataset {
    /// Loads the records passing `filter` (restricted to `satellite`).
    pub fn load(manifest: &Manifest, satellite: Satellite, combo: &BandCombination, filter: &ManifestFilter, classes: &[String]) -> Result<Self> {
        combo.indices(&satellite.spec())?;
        let filter = ManifestFilter { satellite: Some(satellite), ..filter.clone() };
        let records = filter_manifest(&manifest.records, &filter)?;
        let (h, w) = satellite.spec().chip;
        let mut groups: BTreeMap<(String, String), ParcelSeason> = BTreeMap::new();
        for rec in &records {
            let label = classes
                .iter()
                .position(|c| *c == rec.label)
                .ok_or_else(|| Error::Invalid(format!("label {:?} of parcel {} is not among {classes:?}", rec.label, rec.parcel_id)))?;
            let stack = resize_bilinear(&select_bands(&manifest.read_stack(rec)?, combo)?, h, w);
            let item = groups.entry((rec.parcel_id.clone(), rec.season_id.clone())).or_insert_with(|| ParcelSeason {
                parcel_id: rec.parcel_id.clone(),
                season_id: rec.season_id.clone(),
                label,
                stacks: Vec::new(),
            });
            if item.label != label {
                return Err(Error::Invalid(format!("parcel {} has two labels in season {}", rec.parcel_id, rec.season_id)));
            }
            item.stacks.push(stack);
        }
        let mut items: Vec<ParcelSeason> = groups.into_values().collect();
        for item in &mut items {
            item.stacks.sort_by_key(|s| s.date);
        }
        Ok(Dataset { satellite, combo: combo.clone(), classes: classes.to_vec(), items })
    }

    pub fn subset(&self, parcels: &BTreeSet<String>) -> Dataset {
        Dataset { items: self.items.iter().filter(|i| parcels.contains(&i.parcel_id)).cloned().collect(), ..self.without_items() }
    }

    fn without_items(&self) -> Dataset {
        Dataset { satellite: self.satellite, combo: self.combo.clone(), classes: self.classes.clone(), items: Vec::new() }
    }

    pub fn parcel_ids(&self) -> BTreeSet<String> {
        self.items.iter().map(|i| i.parcel_id.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn fit_stats(&self) -> Result<BandStats> {
        let refs: Vec<&BandStack> = self.items.iter().flat_map(|i| i.stacks.iter()).collect();
        BandStats::fit(&refs)
    }

    /// A copy with every stack standardized by `stats`.
    pub fn normalized(&self, stats: &BandStats) -> Result<Dataset> {
        if stats.bands() != self.combo.len() {
            return Err(Error::Contract(format!("{} band statistics for a {}-band combination", stats.bands(), self.combo.len())));
        }
        let mut out = self.clone();
        for s in out.items.iter_mut().flat_map(|i| i.stacks.iter_mut()) {
            stats.apply(&mut s.data);
        }
        Ok(out)
    }

    /// One chip per observation.
    pub fn chips(&self) -> Vec<Chip> {
        self.items
            .iter()
            .flat_map(|i| {
                i.stacks.iter().map(move |s| Chip {
                    parcel_id: s.parcel_id.clone(),
                    label: i.label,
                    bands: s.bands.len(),
                    height: s.height,
                    width: s.width,
                    data: s.data.clone(),
                })
            })
            .collect()
    }

    /// One pixel-set sequence per parcel-season.
    pub fn sequences(&self, max_len: usize, n: usize, seed: u64) -> Result<Vec<SequenceSample>> {
        self.items.iter().map(|i| assemble_sequence(&i.stacks, i.label, max_len, n, seed)).collect()
    }
}

/// Model-ready samples of one dataset.
#[derive(Debug, Clone)]
pub enum Samples {
    Chips(Vec<Chip>),
    Sequences(Vec<SequenceSample>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Chips(c) => c.len(),
            Samples::Sequences(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<usize> {
        match self {
            Samples::Chips(c) => c.iter().map(|c| c.label).collect(),
            Samples::Sequences(s) => s.iter().map(|s| s.label).collect(),
        }
    }

    pub fn batch(&self, idx: &[usize]) -> Result<SampleBatch> {
        Ok(match self {
            Samples::Chips(c) => SampleBatch::Chips(stack_chips(&idx.iter().map(|&i| &c[i]).collect::<Vec<_>>())?),
            Samples::Sequences(s) => SampleBatch::Sequences(stack_sequences(&idx.iter().map(|&i| &s[i]).collect::<Vec<_>>())?),
        })
    }
}
