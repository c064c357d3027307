//! Wikidata-style symmetric/antisymmetric NLI benchmark generation.
//!
//! The pipeline is: obtain triples (from a 5-column TSV in Wikidata5m-like
//! form, or synthesized), swap subject and object under the same relation to
//! form directed premise/hypothesis pairs, label by the relation's symmetry
//! tag, and render through the relation's template in a lexicalized (entity
//! names) or delexicalized (raw Q-identifiers) form. Splits can be made
//! entity-disjoint so that test-time generalization cannot come from entity
//! memorization.

use crate::error::DataError;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

/// NLI gold label; the ordinal order (Entailment before Contradiction) is
/// the deterministic tie-break order everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Entailment,
    Contradiction,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Entailment, Label::Contradiction];

    pub fn ordinal(self) -> usize {
        match self {
            Label::Entailment => 0,
            Label::Contradiction => 1,
        }
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Label> {
        match ordinal {
            0 => Some(Label::Entailment),
            1 => Some(Label::Contradiction),
            _ => None,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Entailment => Label::Contradiction,
            Label::Contradiction => Label::Entailment,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Entailment => write!(f, "Entailment"),
            Label::Contradiction => write!(f, "Contradiction"),
        }
    }
}

/// Whether a relation entails or contradicts its own subject/object swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
}

impl Symmetry {
    /// The NLI label of a swapped pair under this relation.
    pub fn label(self) -> Label {
        match self {
            Symmetry::Symmetric => Label::Entailment,
            Symmetry::Antisymmetric => Label::Contradiction,
        }
    }
}

/// Sentence realization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lexicalized,
    Delexicalized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Lexicalized => write!(f, "lexicalized"),
            Mode::Delexicalized => write!(f, "delexicalized"),
        }
    }
}

fn valid_id(id: &str, prefix: char) -> bool {
    let mut chars = id.chars();
    chars.next() == Some(prefix) && {
        let rest = &id[1..];
        !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit())
    }
}

/// A knowledge-base triple with entity labels attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject_id: String,
    pub subject_label: String,
    pub property_id: String,
    pub object_id: String,
    pub object_label: String,
}

impl Triple {
    pub fn new(
        subject_id: &str,
        subject_label: &str,
        property_id: &str,
        object_id: &str,
        object_label: &str,
    ) -> Result<Self, DataError> {
        let reason = |msg: String| DataError::MalformedLine { line: 0, reason: msg };
        if !valid_id(subject_id, 'Q') {
            return Err(reason(format!("subject id {subject_id:?} does not match Q\\d+")));
        }
        if !valid_id(object_id, 'Q') {
            return Err(reason(format!("object id {object_id:?} does not match Q\\d+")));
        }
        if !valid_id(property_id, 'P') {
            return Err(reason(format!("property id {property_id:?} does not match P\\d+")));
        }
        if subject_label.is_empty() || object_label.is_empty() {
            return Err(reason("entity labels must be nonempty".to_string()));
        }
        Ok(Self {
            subject_id: subject_id.to_string(),
            subject_label: subject_label.to_string(),
            property_id: property_id.to_string(),
            object_id: object_id.to_string(),
            object_label: object_label.to_string(),
        })
    }

    /// The same triple with subject and object exchanged.
    pub fn swapped(&self) -> Triple {
        Triple {
            subject_id: self.object_id.clone(),
            subject_label: self.object_label.clone(),
            property_id: self.property_id.clone(),
            object_id: self.subject_id.clone(),
            object_label: self.subject_label.clone(),
        }
    }
}

/// A relation: its Wikidata property id, its sentence template with [X]
/// (subject) and [Y] (object) placeholders, and its symmetry tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub property_id: &'static str,
    pub template: &'static str,
    pub symmetry: Symmetry,
}

/// The 14 shipped relations. Templates are fixed; symmetry tags follow the
/// corresponding Wikidata property constraints.
pub const RELATIONS: [RelationSpec; 14] = [
    RelationSpec { property_id: "P40", template: "[Y] is a child of [X].", symmetry: Symmetry::Antisymmetric },
    RelationSpec { property_id: "P1382", template: "[Y] partially overlaps with [X].", symmetry: Symmetry::Symmetric },
    RelationSpec { property_id: "P279", template: "[X] is a type of [Y].", symmetry: Symmetry::Antisymmetric },
    RelationSpec { property_id: "P3373", template: "[X] is a sibling of [Y].", symmetry: Symmetry::Symmetric },
    RelationSpec { property_id: "P1560", template: "[X] is an equivalent name of [Y] for other gender.", symmetry: Symmetry::Symmetric },
    RelationSpec { property_id: "P131", template: "[X] is located in [Y].", symmetry: Symmetry::Antisymmetric },
    RelationSpec { property_id: "P25", template: "[Y] is the mother of [X].", symmetry: Symmetry::Antisymmetric },
    RelationSpec { property_id: "P22", template: "[Y] is the father of [X].", symmetry: Symmetry::Antisymmetric },
    RelationSpec { property_id: "P460", template: "[X] possibly the same as [Y].", symmetry: Symmetry::Symmetric },
    RelationSpec { property_id: "P2670", template: "[X] has part(s) that are instances of [Y].", symmetry: Symmetry::Antisymmetric },
    RelationSpec { property_id: "P1542", template: "[X] led to [Y].", symmetry: Symmetry::Antisymmetric },
    RelationSpec { property_id: "P1889", template: "[X] is different from [Y].", symmetry: Symmetry::Symmetric },
    RelationSpec { property_id: "P361", template: "[X] is part of [Y].", symmetry: Symmetry::Antisymmetric },
    RelationSpec { property_id: "P828", template: "[X] caused by [Y].", symmetry: Symmetry::Antisymmetric },
];

/// Looks up one of the 14 shipped relations by property id.
pub fn relation_spec(property_id: &str) -> Result<&'static RelationSpec, DataError> {
    RELATIONS
        .iter()
        .find(|r| r.property_id == property_id)
        .ok_or_else(|| DataError::UnknownProperty {
            property_id: property_id.to_string(),
        })
}

/// A directed premise/hypothesis pair before sentence realization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleSkeleton {
    pub premise: Triple,
    pub hypothesis: Triple,
    pub label: Label,
}

/// One benchmark example. The hypothesis is always the premise with subject
/// and object entities swapped under the same template, and the label is
/// Entailment exactly when the relation is symmetric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliExample {
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
    pub property_id: String,
    pub mode: Mode,
    pub subject_id: String,
    pub object_id: String,
}

/// Swaps subject and object while maintaining the relation, yielding both
/// directed examples: (original → swapped) and (swapped → original). Both
/// carry the label dictated by the relation's symmetry tag.
pub fn swap_and_label(
    triple: &Triple,
    spec: &RelationSpec,
) -> Result<[ExampleSkeleton; 2], DataError> {
    if triple.property_id != spec.property_id {
        return Err(DataError::PropertyMismatch {
            triple: triple.property_id.clone(),
            spec: spec.property_id.to_string(),
        });
    }
    let label = spec.symmetry.label();
    let swapped = triple.swapped();
    Ok([
        ExampleSkeleton {
            premise: triple.clone(),
            hypothesis: swapped.clone(),
            label,
        },
        ExampleSkeleton {
            premise: swapped,
            hypothesis: triple.clone(),
            label,
        },
    ])
}

fn render(template: &str, triple: &Triple, mode: Mode) -> String {
    let (x, y) = match mode {
        Mode::Lexicalized => (triple.subject_label.as_str(), triple.object_label.as_str()),
        Mode::Delexicalized => (triple.subject_id.as_str(), triple.object_id.as_str()),
    };
    template.replacen("[X]", x, 1).replacen("[Y]", y, 1)
}

/// Substitutes [X]/[Y] with entity labels (lexicalized) or Q-identifiers
/// (delexicalized) for both directions of the skeleton.
pub fn realize(skeleton: &ExampleSkeleton, spec: &RelationSpec, mode: Mode) -> NliExample {
    NliExample {
        premise: render(spec.template, &skeleton.premise, mode),
        hypothesis: render(spec.template, &skeleton.hypothesis, mode),
        label: skeleton.label,
        property_id: spec.property_id.to_string(),
        mode,
        subject_id: skeleton.premise.subject_id.clone(),
        object_id: skeleton.premise.object_id.clone(),
    }
}

/// Recovers the [X] and [Y] fillers of a sentence generated from `template`.
/// Used to verify template fidelity; returns None if the sentence does not
/// fit the template.
pub fn parse_with_template(sentence: &str, template: &str) -> Option<(String, String)> {
    let ix = template.find("[X]")?;
    let iy = template.find("[Y]")?;
    let (first, second, x_first) = if ix < iy {
        (ix, iy, true)
    } else {
        (iy, ix, false)
    };
    let prefix = &template[..first];
    let middle = &template[first + 3..second];
    let suffix = &template[second + 3..];
    let body = sentence.strip_prefix(prefix)?.strip_suffix(suffix)?;
    let mid_at = body.find(middle)?;
    let a = &body[..mid_at];
    let b = &body[mid_at + middle.len()..];
    if a.is_empty() || b.is_empty() {
        return None;
    }
    if x_first {
        Some((a.to_string(), b.to_string()))
    } else {
        Some((b.to_string(), a.to_string()))
    }
}

/// Loads a 5-column tab-separated triple file:
/// `subject_id \t subject_label \t property_id \t object_id \t object_label`.
pub fn load_triples(path: &Path) -> Result<Vec<Triple>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut triples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(DataError::MalformedLine {
                line: line_no,
                reason: format!("expected 5 tab-separated columns, found {}", cols.len()),
            });
        }
        let triple =
            Triple::new(cols[0], cols[1], cols[2], cols[3], cols[4]).map_err(|e| match e {
                DataError::MalformedLine { reason, .. } => {
                    DataError::MalformedLine { line: line_no, reason }
                }
                other => other,
            })?;
        triples.push(triple);
    }
    Ok(triples)
}

/// Writes triples in the 5-column tab-separated format read by
/// [`load_triples`].
pub fn save_triples(path: &Path, triples: &[Triple]) -> Result<(), DataError> {
    let mut out = String::new();
    for t in triples {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            t.subject_id, t.subject_label, t.property_id, t.object_id, t.object_label
        ));
    }
    std::fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

// Entity names are two made-up tokens drawn from small shared pools, so
// splits that are disjoint in entity ids still share name tokens: every
// name token occurs across many entities, and lexicalized generalization is
// a matter of unseen combinations rather than unseen vocabulary.
const NAME_FIRST: [&str; 15] = [
    "Baroki", "Tamsel", "Virona", "Keldan", "Mirathe", "Soluna", "Drenvik", "Paltor", "Quorin",
    "Feslar", "Garnove", "Heliax", "Ithmar", "Jovella", "Krentis",
];
const NAME_SECOND: [&str; 15] = [
    "Ardel", "Binsor", "Corvat", "Dunmel", "Envika", "Folrest", "Gimbra", "Hovtan", "Ilsker",
    "Jambor", "Kvelti", "Lorvin", "Marnis", "Noldra", "Opline",
];

/// Entities are paired only inside small fixed communities so that the
/// entity co-occurrence graph decomposes into many tiny components and
/// entity-disjoint splitting stays feasible at any fraction.
const COMMUNITY_SIZE: usize = 4;

fn synthetic_entity(i: usize) -> (String, String) {
    let id = format!("Q{}", 900000 + i);
    let label = format!(
        "{} {}",
        NAME_FIRST[i % NAME_FIRST.len()],
        NAME_SECOND[(i / NAME_FIRST.len()) % NAME_SECOND.len()]
    );
    (id, label)
}

/// Synthesizes a deterministic desk-scale triple set: `n_per_relation`
/// triples for each of the 14 relations over `n_entities` synthetic
/// entities, with subject ≠ object, no duplicate (subject, property,
/// object), and no antisymmetric pair present in both orientations.
pub fn synthesize_triples(
    seed: u64,
    n_entities: usize,
    n_per_relation: usize,
) -> Result<Vec<Triple>, DataError> {
    if n_entities < 2 {
        return Err(DataError::Infeasible(
            "need at least 2 entities to form a pair".to_string(),
        ));
    }
    let nameable = NAME_FIRST.len() * NAME_SECOND.len();
    if n_entities > nameable {
        return Err(DataError::Infeasible(format!(
            "at most {nameable} distinct synthetic entities are nameable"
        )));
    }
    let entities: Vec<(String, String)> = (0..n_entities).map(synthetic_entity).collect();
    let n_communities = n_entities.div_ceil(COMMUNITY_SIZE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::with_capacity(14 * n_per_relation);
    let mut seen: BTreeSet<(usize, &'static str, usize)> = BTreeSet::new();

    for spec in &RELATIONS {
        let mut produced = 0;
        let mut attempts = 0;
        let attempt_limit = 1000 * n_per_relation.max(1);
        while produced < n_per_relation {
            attempts += 1;
            if attempts > attempt_limit {
                return Err(DataError::Infeasible(format!(
                    "cannot place {} non-duplicate triples for {} over {} entities",
                    n_per_relation, spec.property_id, n_entities
                )));
            }
            let community = rng.gen_range(0..n_communities);
            let lo = community * COMMUNITY_SIZE;
            let hi = ((community + 1) * COMMUNITY_SIZE).min(n_entities);
            if hi - lo < 2 {
                continue;
            }
            let s = rng.gen_range(lo..hi);
            let o = rng.gen_range(lo..hi);
            if s == o || seen.contains(&(s, spec.property_id, o)) {
                continue;
            }
            if spec.symmetry == Symmetry::Antisymmetric && seen.contains(&(o, spec.property_id, s))
            {
                continue;
            }
            seen.insert((s, spec.property_id, o));
            triples.push(Triple {
                subject_id: entities[s].0.clone(),
                subject_label: entities[s].1.clone(),
                property_id: spec.property_id.to_string(),
                object_id: entities[o].0.clone(),
                object_label: entities[o].1.clone(),
            });
            produced += 1;
        }
    }
    Ok(triples)
}

/// Seed and fractions for the train/dev/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub entity_disjoint: bool,
}

impl SplitConfig {
    pub fn new(
        seed: u64,
        fractions: (f64, f64, f64),
        entity_disjoint: bool,
    ) -> Result<Self, DataError> {
        let sum = fractions.0 + fractions.1 + fractions.2;
        if (sum - 1.0).abs() > 1e-9 || fractions.0 < 0.0 || fractions.1 < 0.0 || fractions.2 < 0.0
        {
            return Err(DataError::BadFractions { got: sum });
        }
        Ok(Self {
            seed,
            train_fraction: fractions.0,
            dev_fraction: fractions.1,
            test_fraction: fractions.2,
            entity_disjoint,
        })
    }
}

/// A train/dev/test partition of examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

impl<T> SplitSet<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Partitions skeletons into train/dev/test.
///
/// Both directed examples of a swap-pair always land in the same split.
/// With `entity_disjoint`, connected components of the entity co-occurrence
/// graph are assigned whole, so no entity id appears in more than one split;
/// an empty resulting split is reported as infeasible.
pub fn make_splits(
    skeletons: &[ExampleSkeleton],
    cfg: &SplitConfig,
) -> Result<SplitSet<ExampleSkeleton>, DataError> {
    // Group the two directions of each swap-pair together.
    let mut groups: BTreeMap<(String, String, String), Vec<usize>> = BTreeMap::new();
    for (i, sk) in skeletons.iter().enumerate() {
        let (a, b) = if sk.premise.subject_id <= sk.premise.object_id {
            (sk.premise.subject_id.clone(), sk.premise.object_id.clone())
        } else {
            (sk.premise.object_id.clone(), sk.premise.subject_id.clone())
        };
        groups
            .entry((sk.premise.property_id.clone(), a, b))
            .or_default()
            .push(i);
    }
    let group_list: Vec<Vec<usize>> = groups.into_values().collect();

    // Units of assignment: swap-pair groups, or whole entity components.
    let units: Vec<Vec<usize>> = if cfg.entity_disjoint {
        let mut entity_ids: BTreeMap<String, usize> = BTreeMap::new();
        for sk in skeletons {
            let next = entity_ids.len();
            entity_ids.entry(sk.premise.subject_id.clone()).or_insert(next);
            let next = entity_ids.len();
            entity_ids.entry(sk.premise.object_id.clone()).or_insert(next);
        }
        let mut dsu = DisjointSets::new(entity_ids.len());
        for sk in skeletons {
            dsu.union(
                entity_ids[&sk.premise.subject_id],
                entity_ids[&sk.premise.object_id],
            );
        }
        let mut by_component: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for group in &group_list {
            let root = dsu.find(entity_ids[&skeletons[group[0]].premise.subject_id]);
            by_component.entry(root).or_default().extend(group.iter().copied());
        }
        by_component.into_values().collect()
    } else {
        group_list
    };

    let mut order: Vec<usize> = (0..units.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut rng);

    let total = skeletons.len() as f64;
    let targets = [
        cfg.train_fraction * total,
        cfg.dev_fraction * total,
        cfg.test_fraction * total,
    ];
    let mut assigned = [0usize; 3];
    let mut split_of_unit = vec![0usize; units.len()];
    for &u in &order {
        // Largest remaining deficit wins; ties resolve train > dev > test.
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for s in 0..3 {
            let deficit = targets[s] - assigned[s] as f64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = s;
            }
        }
        split_of_unit[u] = best;
        assigned[best] += units[u].len();
    }

    let mut splits = SplitSet {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    for (u, unit) in units.iter().enumerate() {
        let bucket = match split_of_unit[u] {
            0 => &mut splits.train,
            1 => &mut splits.dev,
            _ => &mut splits.test,
        };
        for &i in unit {
            bucket.push(skeletons[i].clone());
        }
    }

    if cfg.entity_disjoint {
        let entity_set = |sks: &[ExampleSkeleton]| -> BTreeSet<String> {
            sks.iter()
                .flat_map(|sk| {
                    [sk.premise.subject_id.clone(), sk.premise.object_id.clone()]
                })
                .collect()
        };
        let train_set = entity_set(&splits.train);
        let dev_set = entity_set(&splits.dev);
        let test_set = entity_set(&splits.test);
        if train_set.intersection(&dev_set).next().is_some()
            || train_set.intersection(&test_set).next().is_some()
            || dev_set.intersection(&test_set).next().is_some()
        {
            return Err(DataError::Infeasible(
                "entity-disjoint assignment produced overlapping splits".to_string(),
            ));
        }
        if (cfg.train_fraction > 0.0 && splits.train.is_empty())
            || (cfg.dev_fraction > 0.0 && splits.dev.is_empty())
            || (cfg.test_fraction > 0.0 && splits.test.is_empty())
        {
            return Err(DataError::Infeasible(
                "not enough distinct entity components to fill every split".to_string(),
            ));
        }
    }
    Ok(splits)
}

/// Generator configuration; defaults give the desk-scale benchmark of
/// 1,400 triples → 2,800 directed examples per mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub seed: u64,
    pub n_entities: usize,
    pub n_per_relation: usize,
    pub train_fraction: f64,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub entity_disjoint: bool,
}

impl GenerateConfig {
    pub fn desk_default(seed: u64) -> Self {
        Self {
            seed,
            n_entities: 200,
            n_per_relation: 100,
            train_fraction: 0.8,
            dev_fraction: 0.1,
            test_fraction: 0.1,
            entity_disjoint: true,
        }
    }

    pub fn split_config(&self) -> Result<SplitConfig, DataError> {
        SplitConfig::new(
            self.seed,
            (self.train_fraction, self.dev_fraction, self.test_fraction),
            self.entity_disjoint,
        )
    }
}

/// Seed, per-relation counts, and split sizes of one generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub seed: u64,
    pub n_entities: usize,
    pub n_per_relation: usize,
    pub entity_disjoint: bool,
    pub triples: usize,
    pub examples_per_mode: usize,
    pub relation_counts: BTreeMap<String, usize>,
    pub split_sizes: BTreeMap<String, usize>,
}

/// A fully generated benchmark: the source triples and the realized and
/// split corpora in both modes. The split structure is computed once on
/// skeletons, so both modes share exactly the same membership.
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub triples: Vec<Triple>,
    pub lexicalized: SplitSet<NliExample>,
    pub delexicalized: SplitSet<NliExample>,
    pub manifest: GenerationManifest,
}

fn realize_split(skeletons: &[ExampleSkeleton], mode: Mode) -> Result<Vec<NliExample>, DataError> {
    skeletons
        .iter()
        .map(|sk| Ok(realize(sk, relation_spec(&sk.premise.property_id)?, mode)))
        .collect()
}

/// Runs swap-and-label, splitting, and realization over the given triples.
pub fn build_corpus(triples: &[Triple], cfg: &GenerateConfig) -> Result<GeneratedCorpus, DataError> {
    let mut skeletons = Vec::with_capacity(triples.len() * 2);
    let mut relation_counts: BTreeMap<String, usize> = BTreeMap::new();
    for triple in triples {
        let spec = relation_spec(&triple.property_id)?;
        let [a, b] = swap_and_label(triple, spec)?;
        skeletons.push(a);
        skeletons.push(b);
        *relation_counts.entry(triple.property_id.clone()).or_insert(0) += 2;
    }
    let splits = make_splits(&skeletons, &cfg.split_config()?)?;
    let lexicalized = SplitSet {
        train: realize_split(&splits.train, Mode::Lexicalized)?,
        dev: realize_split(&splits.dev, Mode::Lexicalized)?,
        test: realize_split(&splits.test, Mode::Lexicalized)?,
    };
    let delexicalized = SplitSet {
        train: realize_split(&splits.train, Mode::Delexicalized)?,
        dev: realize_split(&splits.dev, Mode::Delexicalized)?,
        test: realize_split(&splits.test, Mode::Delexicalized)?,
    };
    let mut split_sizes = BTreeMap::new();
    split_sizes.insert("train".to_string(), splits.train.len());
    split_sizes.insert("dev".to_string(), splits.dev.len());
    split_sizes.insert("test".to_string(), splits.test.len());
    let manifest = GenerationManifest {
        seed: cfg.seed,
        n_entities: cfg.n_entities,
        n_per_relation: cfg.n_per_relation,
        entity_disjoint: cfg.entity_disjoint,
        triples: triples.len(),
        examples_per_mode: skeletons.len(),
        relation_counts,
        split_sizes,
    };
    Ok(GeneratedCorpus {
        triples: triples.to_vec(),
        lexicalized,
        delexicalized,
        manifest,
    })
}

/// Synthesizes triples and builds the corpus in one step.
pub fn generate_corpus(cfg: &GenerateConfig) -> Result<GeneratedCorpus, DataError> {
    let triples = synthesize_triples(cfg.seed, cfg.n_entities, cfg.n_per_relation)?;
    build_corpus(&triples, cfg)
}

/// Writes examples as line-delimited JSON with a fixed field order, one
/// example per line. Byte-deterministic given its input.
pub fn write_corpus(path: &Path, examples: &[NliExample]) -> Result<(), DataError> {
    let io_err = |source: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for example in examples {
        let line = serde_json::to_string(example)
            .map_err(|e| DataError::MalformedLine { line: 0, reason: e.to_string() })?;
        file.write_all(line.as_bytes()).map_err(io_err)?;
        file.write_all(b"\n").map_err(io_err)?;
    }
    file.flush().map_err(io_err)?;
    Ok(())
}

/// Reads a corpus written by [`write_corpus`].
pub fn read_corpus(path: &Path) -> Result<Vec<NliExample>, DataError> {
    let content = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut examples = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let example: NliExample =
            serde_json::from_str(line).map_err(|e| DataError::MalformedLine {
                line: i + 1,
                reason: e.to_string(),
            })?;
        examples.push(example);
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p361_triple() -> Triple {
        Triple::new(
            "Q7024230",
            "Nibong LRT Station",
            "P361",
            "Q2231347",
            "LRT Singapore",
        )
        .unwrap()
    }

    #[test]
    fn relation_table_shape() {
        assert_eq!(RELATIONS.len(), 14);
        let symmetric: Vec<&str> = RELATIONS
            .iter()
            .filter(|r| r.symmetry == Symmetry::Symmetric)
            .map(|r| r.property_id)
            .collect();
        assert_eq!(symmetric, vec!["P1382", "P3373", "P1560", "P460", "P1889"]);
        for spec in &RELATIONS {
            assert_eq!(spec.template.matches("[X]").count(), 1);
            assert_eq!(spec.template.matches("[Y]").count(), 1);
        }
    }

    #[test]
    fn swap_and_label_worked_example() {
        let spec = relation_spec("P361").unwrap();
        let [fwd, bwd] = swap_and_label(&p361_triple(), spec).unwrap();
        assert_eq!(fwd.label, Label::Contradiction);
        assert_eq!(bwd.label, Label::Contradiction);
        let lex = realize(&fwd, spec, Mode::Lexicalized);
        assert_eq!(lex.premise, "Nibong LRT Station is part of LRT Singapore.");
        assert_eq!(lex.hypothesis, "LRT Singapore is part of Nibong LRT Station.");
        assert_eq!(lex.label, Label::Contradiction);
        let delex = realize(&fwd, spec, Mode::Delexicalized);
        assert_eq!(delex.premise, "Q7024230 is part of Q2231347.");
        assert_eq!(delex.hypothesis, "Q2231347 is part of Q7024230.");
    }

    #[test]
    fn swap_and_label_symmetric_both_directions_entail() {
        let spec = relation_spec("P3373").unwrap();
        let triple = Triple::new("Q1", "Baroki Ardel", "P3373", "Q2", "Tamsel Binsor").unwrap();
        let [fwd, bwd] = swap_and_label(&triple, spec).unwrap();
        assert_eq!(fwd.label, Label::Entailment);
        assert_eq!(bwd.label, Label::Entailment);
    }

    #[test]
    fn swap_and_label_property_mismatch_errors() {
        let spec = relation_spec("P3373").unwrap();
        assert!(matches!(
            swap_and_label(&p361_triple(), spec),
            Err(DataError::PropertyMismatch { .. })
        ));
    }

    #[test]
    fn realize_respects_template_direction() {
        let spec = relation_spec("P40").unwrap();
        let triple = Triple::new("Q1", "Alice", "P40", "Q2", "Bob").unwrap();
        let [fwd, _] = swap_and_label(&triple, spec).unwrap();
        let example = realize(&fwd, spec, Mode::Lexicalized);
        assert_eq!(example.premise, "Bob is a child of Alice.");
        assert_eq!(example.hypothesis, "Alice is a child of Bob.");
    }

    #[test]
    fn template_round_trip_recovers_entities() {
        for spec in &RELATIONS {
            let triple = Triple::new("Q5", "Mirathe Envika", spec.property_id, "Q6", "Quorin Hovtan")
                .unwrap();
            let [fwd, _] = swap_and_label(&triple, spec).unwrap();
            for mode in [Mode::Lexicalized, Mode::Delexicalized] {
                let example = realize(&fwd, spec, mode);
                let (x, y) = parse_with_template(&example.premise, spec.template).unwrap();
                match mode {
                    Mode::Lexicalized => {
                        assert_eq!(x, "Mirathe Envika");
                        assert_eq!(y, "Quorin Hovtan");
                    }
                    Mode::Delexicalized => {
                        assert_eq!(x, "Q5");
                        assert_eq!(y, "Q6");
                    }
                }
            }
        }
    }

    #[test]
    fn load_triples_reads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("triples.tsv");
        std::fs::write(
            &path,
            "Q1\tAlice\tP40\tQ2\tBob\nQ3\tCity\tP131\tQ4\tCountry\nQ5\tA\tP361\tQ6\tB\n",
        )
        .unwrap();
        let triples = load_triples(&path).unwrap();
        assert_eq!(triples.len(), 3);
        assert_eq!(triples[1].property_id, "P131");
    }

    #[test]
    fn load_triples_names_malformed_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("triples.tsv");
        std::fs::write(&path, "Q1\tAlice\tP40\tQ2\tBob\nQ3\tCity\tP131\tQ4\n").unwrap();
        match load_triples(&path) {
            Err(DataError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }

    #[test]
    fn triples_round_trip_through_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("triples.tsv");
        let triples = synthesize_triples(3, 40, 5).unwrap();
        save_triples(&path, &triples).unwrap();
        let loaded = load_triples(&path).unwrap();
        assert_eq!(triples, loaded);
    }

    #[test]
    fn synthesize_is_deterministic_and_well_formed() {
        let a = synthesize_triples(11, 60, 10).unwrap();
        let b = synthesize_triples(11, 60, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 14 * 10);
        let property_ids: BTreeSet<&str> = a.iter().map(|t| t.property_id.as_str()).collect();
        for id in &property_ids {
            assert!(relation_spec(id).is_ok());
        }
        for t in &a {
            assert_ne!(t.subject_id, t.object_id);
        }
        let distinct: BTreeSet<(&str, &str, &str)> = a
            .iter()
            .map(|t| (t.subject_id.as_str(), t.property_id.as_str(), t.object_id.as_str()))
            .collect();
        assert_eq!(distinct.len(), a.len());
    }

    #[test]
    fn synthesize_antisymmetric_has_no_reversed_pairs() {
        let triples = synthesize_triples(13, 80, 20).unwrap();
        let set: BTreeSet<(String, String, String)> = triples
            .iter()
            .map(|t| (t.subject_id.clone(), t.property_id.clone(), t.object_id.clone()))
            .collect();
        for t in &triples {
            if relation_spec(&t.property_id).unwrap().symmetry == Symmetry::Antisymmetric {
                assert!(
                    !set.contains(&(t.object_id.clone(), t.property_id.clone(), t.subject_id.clone())),
                    "both orientations of {} under {}",
                    t.subject_id,
                    t.property_id
                );
            }
        }
    }

    #[test]
    fn splits_have_expected_sizes_without_disjointness() {
        let triples = synthesize_triples(17, 100, 36).unwrap();
        let mut skeletons = Vec::new();
        for t in &triples {
            let [a, b] = swap_and_label(t, relation_spec(&t.property_id).unwrap()).unwrap();
            skeletons.push(a);
            skeletons.push(b);
        }
        // 1008 examples, fractions used in the spec's worked sizing.
        let n = skeletons.len();
        let cfg = SplitConfig::new(5, (0.8, 0.1, 0.1), false).unwrap();
        let splits = make_splits(&skeletons, &cfg).unwrap();
        let (tr, dv, te) = splits.sizes();
        assert_eq!(tr + dv + te, n);
        assert!((tr as f64 - 0.8 * n as f64).abs() <= 2.0);
        assert!((dv as f64 - 0.1 * n as f64).abs() <= 2.0);
        assert!((te as f64 - 0.1 * n as f64).abs() <= 2.0);
    }

    #[test]
    fn entity_disjoint_splits_share_no_entities() {
        let triples = synthesize_triples(19, 120, 25).unwrap();
        let mut skeletons = Vec::new();
        for t in &triples {
            let [a, b] = swap_and_label(t, relation_spec(&t.property_id).unwrap()).unwrap();
            skeletons.push(a);
            skeletons.push(b);
        }
        let cfg = SplitConfig::new(23, (0.8, 0.1, 0.1), true).unwrap();
        let splits = make_splits(&skeletons, &cfg).unwrap();
        let entities = |sks: &[ExampleSkeleton]| -> BTreeSet<String> {
            sks.iter()
                .flat_map(|sk| [sk.premise.subject_id.clone(), sk.premise.object_id.clone()])
                .collect()
        };
        let train = entities(&splits.train);
        let dev = entities(&splits.dev);
        let test = entities(&splits.test);
        assert!(train.intersection(&dev).next().is_none());
        assert!(train.intersection(&test).next().is_none());
        assert!(dev.intersection(&test).next().is_none());
        assert!(!splits.dev.is_empty() && !splits.test.is_empty());
    }

    #[test]
    fn splits_are_seed_deterministic() {
        let triples = synthesize_triples(29, 60, 8).unwrap();
        let mut skeletons = Vec::new();
        for t in &triples {
            let [a, b] = swap_and_label(t, relation_spec(&t.property_id).unwrap()).unwrap();
            skeletons.push(a);
            skeletons.push(b);
        }
        let cfg = SplitConfig::new(31, (0.7, 0.15, 0.15), true).unwrap();
        assert_eq!(
            make_splits(&skeletons, &cfg).unwrap(),
            make_splits(&skeletons, &cfg).unwrap()
        );
    }

    #[test]
    fn direction_closure_within_splits() {
        let cfg = GenerateConfig {
            seed: 37,
            n_entities: 48,
            n_per_relation: 8,
            train_fraction: 0.8,
            dev_fraction: 0.1,
            test_fraction: 0.1,
            entity_disjoint: true,
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for split in [
            &corpus.lexicalized.train,
            &corpus.lexicalized.dev,
            &corpus.lexicalized.test,
        ] {
            let pairs: BTreeSet<(String, String, Label)> = split
                .iter()
                .map(|e| (e.premise.clone(), e.hypothesis.clone(), e.label))
                .collect();
            for e in split.iter() {
                assert!(
                    pairs.contains(&(e.hypothesis.clone(), e.premise.clone(), e.label)),
                    "missing reverse direction of {:?}",
                    e.premise
                );
            }
        }
    }

    #[test]
    fn label_soundness_and_mode_parity() {
        let cfg = GenerateConfig {
            seed: 41,
            n_entities: 48,
            n_per_relation: 8,
            train_fraction: 0.8,
            dev_fraction: 0.1,
            test_fraction: 0.1,
            entity_disjoint: true,
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let all = |s: &SplitSet<NliExample>| {
            s.train
                .iter()
                .chain(s.dev.iter())
                .chain(s.test.iter())
                .cloned()
                .collect::<Vec<_>>()
        };
        let lex = all(&corpus.lexicalized);
        let delex = all(&corpus.delexicalized);
        for e in lex.iter().chain(delex.iter()) {
            let spec = relation_spec(&e.property_id).unwrap();
            assert_eq!(e.label == Label::Entailment, spec.symmetry == Symmetry::Symmetric);
        }
        let key = |e: &NliExample| {
            (e.label, e.property_id.clone(), e.subject_id.clone(), e.object_id.clone())
        };
        let mut lex_keys: Vec<_> = lex.iter().map(key).collect();
        let mut delex_keys: Vec<_> = delex.iter().map(key).collect();
        lex_keys.sort();
        delex_keys.sort();
        assert_eq!(lex_keys, delex_keys);
    }

    #[test]
    fn corpus_files_are_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenerateConfig {
            seed: 43,
            n_entities: 32,
            n_per_relation: 4,
            train_fraction: 0.8,
            dev_fraction: 0.1,
            test_fraction: 0.1,
            entity_disjoint: true,
        };
        let a_path = dir.path().join("a.jsonl");
        let b_path = dir.path().join("b.jsonl");
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        write_corpus(&a_path, &a.lexicalized.train).unwrap();
        write_corpus(&b_path, &b.lexicalized.train).unwrap();
        assert_eq!(
            std::fs::read(&a_path).unwrap(),
            std::fs::read(&b_path).unwrap()
        );
        let loaded = read_corpus(&a_path).unwrap();
        assert_eq!(loaded, a.lexicalized.train);
    }
}
