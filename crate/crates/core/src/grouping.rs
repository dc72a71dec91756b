//! Partition of country codes into country classes.
//!
//! Grouping files hold one country per line:
//!
//! ```text
//! # grouping v1
//! IT 5 IT+VA
//! VA 5 IT+VA
//! ```
//!
//! Class ids must cover `0..K` without gaps and every line of a class must
//! repeat the same label.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::geo::{haversine, LatLon};
use crate::manifest::{ClassId, CountryCode};

pub const GROUPING_HEADER: &str = "# grouping v1";

#[derive(Debug, thiserror::Error)]
pub enum GroupingError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("country {0} listed more than once")]
    Duplicate(CountryCode),
    #[error("country {0} has no class")]
    MissingCountry(CountryCode),
    #[error("class {0} has no countries")]
    EmptyClass(ClassId),
    #[error("class {class} labelled both `{first}` and `{second}`")]
    InconsistentLabel {
        class: ClassId,
        first: String,
        second: String,
    },
    #[error("cannot form {k} classes from {n} countries")]
    TooManyClasses { k: usize, n: usize },
    #[error("K must be at least 1")]
    ZeroClasses,
    #[error("country {0} is not part of the grouping")]
    UnknownCountry(CountryCode),
    #[error("seed group references unknown or repeated country {0}")]
    BadSeed(CountryCode),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassGrouping {
    assignment: BTreeMap<CountryCode, ClassId>,
    labels: Vec<String>,
}

impl ClassGrouping {
    /// Builds a grouping from explicit groups. Class ids follow the order of
    /// each group's smallest code; labels join member codes with `+`.
    pub fn from_groups(mut groups: Vec<Vec<CountryCode>>) -> Result<Self, GroupingError> {
        for g in &mut groups {
            g.sort();
        }
        groups.retain(|g| !g.is_empty());
        groups.sort();
        let mut assignment = BTreeMap::new();
        let mut labels = Vec::with_capacity(groups.len());
        for (class, g) in groups.iter().enumerate() {
            for &code in g {
                if assignment.insert(code, class as ClassId).is_some() {
                    return Err(GroupingError::Duplicate(code));
                }
            }
            labels.push(g.iter().map(|c| c.as_str()).collect::<Vec<_>>().join("+"));
        }
        Ok(ClassGrouping { assignment, labels })
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn class_of(&self, code: CountryCode) -> Option<ClassId> {
        self.assignment.get(&code).copied()
    }

    pub fn label(&self, class: ClassId) -> Option<&str> {
        self.labels.get(class as usize).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn members(&self, class: ClassId) -> Vec<CountryCode> {
        self.assignment
            .iter()
            .filter(|(_, &c)| c == class)
            .map(|(&code, _)| code)
            .collect()
    }

    pub fn countries(&self) -> impl Iterator<Item = CountryCode> + '_ {
        self.assignment.keys().copied()
    }

    pub fn assignment(&self) -> &BTreeMap<CountryCode, ClassId> {
        &self.assignment
    }

    /// Writes the grouping file, countries ordered by class then code.
    pub fn write_to<W: Write>(&self, mut out: W, comments: &[&str]) -> io::Result<()> {
        writeln!(out, "{GROUPING_HEADER}")?;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut rows: Vec<(ClassId, CountryCode)> =
            self.assignment.iter().map(|(&code, &class)| (class, code)).collect();
        rows.sort();
        for (class, code) in rows {
            writeln!(out, "{code} {class} {}", self.labels[class as usize])?;
        }
        Ok(())
    }
}

/// Reads a grouping file. When `expected` is given, every listed country
/// must be assigned.
pub fn load_grouping<R: BufRead>(
    reader: R,
    expected: Option<&[CountryCode]>,
) -> Result<ClassGrouping, GroupingError> {
    let mut assignment = BTreeMap::new();
    let mut labels: BTreeMap<ClassId, String> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |message: String| GroupingError::Parse { line: i + 1, message };
        let mut parts = t.split_whitespace();
        let (Some(code), Some(class)) = (parts.next(), parts.next()) else {
            return Err(err("expected `country_code class_id class_label`".into()));
        };
        let label = parts.collect::<Vec<_>>().join(" ");
        if label.is_empty() {
            return Err(err("missing class label".into()));
        }
        let code: CountryCode = code.parse().map_err(|_| err(format!("bad country code `{code}`")))?;
        let class: ClassId = class.parse().map_err(|_| err(format!("bad class id `{class}`")))?;
        if assignment.insert(code, class).is_some() {
            return Err(GroupingError::Duplicate(code));
        }
        match labels.get(&class) {
            Some(first) if *first != label => {
                return Err(GroupingError::InconsistentLabel {
                    class,
                    first: first.clone(),
                    second: label,
                })
            }
            Some(_) => {}
            None => {
                labels.insert(class, label);
            }
        }
    }
    if let Some(expected) = expected {
        if let Some(&missing) = expected.iter().find(|c| !assignment.contains_key(c)) {
            return Err(GroupingError::MissingCountry(missing));
        }
    }
    let k = labels.keys().next_back().map_or(0, |&m| m as usize + 1);
    if let Some(gap) = (0..k as ClassId).find(|c| !labels.contains_key(c)) {
        return Err(GroupingError::EmptyClass(gap));
    }
    Ok(ClassGrouping {
        assignment,
        labels: labels.into_values().collect(),
    })
}

pub fn map_country_to_class(code: CountryCode, grouping: &ClassGrouping) -> Result<ClassId, GroupingError> {
    grouping.class_of(code).ok_or(GroupingError::UnknownCountry(code))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountryStat {
    pub code: CountryCode,
    pub count: u64,
    pub centroid: LatLon,
}

/// Reads `code <TAB> count <TAB> lat <TAB> lon` rows; `#` comments allowed.
pub fn load_country_stats<R: BufRead>(reader: R) -> Result<Vec<CountryStat>, GroupingError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |message: String| GroupingError::Parse { line: i + 1, message };
        let cols: Vec<&str> = t.split('\t').map(str::trim).collect();
        if cols.len() < 4 {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        }
        let code = cols[0].parse().map_err(|_| err(format!("bad country code `{}`", cols[0])))?;
        let count = cols[1].parse().map_err(|_| err(format!("bad count `{}`", cols[1])))?;
        let lat: f64 = cols[2].parse().map_err(|_| err(format!("bad latitude `{}`", cols[2])))?;
        let lon: f64 = cols[3].parse().map_err(|_| err(format!("bad longitude `{}`", cols[3])))?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(err("coordinate out of range".into()));
        }
        out.push(CountryStat {
            code,
            count,
            centroid: LatLon::new(lat, lon),
        });
    }
    Ok(out)
}

/// Pinned memberships for [`compute_grouping_seeded`].
#[derive(Clone, Debug, Default)]
pub struct GroupingSeeds {
    /// Countries that start out already merged.
    pub groups: Vec<Vec<CountryCode>>,
    /// Countries kept as a class of their own, never merged in either direction.
    pub sealed: BTreeSet<CountryCode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeStep {
    /// Smallest code of the absorbed group.
    pub from: CountryCode,
    /// Smallest code of the absorbing group.
    pub into: CountryCode,
    pub distance_km: f64,
    /// Smallest group image count after the merge.
    pub min_count: u64,
}

#[derive(Clone, Debug)]
pub struct GroupingRun {
    pub grouping: ClassGrouping,
    pub merges: Vec<MergeStep>,
    /// Classes whose image count is below `min_images`.
    pub undersized: Vec<ClassId>,
    pub class_counts: Vec<u64>,
}

struct Group {
    members: Vec<CountryCode>,
    count: u64,
    weighted: [f64; 3],
    plain: [f64; 3],
    sealed: bool,
}

impl Group {
    fn key(&self) -> CountryCode {
        self.members[0]
    }

    fn centroid(&self) -> LatLon {
        let v = if self.weighted.iter().any(|c| *c != 0.0) {
            self.weighted
        } else {
            self.plain
        };
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r < 1e-12 {
            return LatLon::new(0.0, 0.0);
        }
        let lat = (v[2] / r).asin().to_degrees();
        let lon = v[1].atan2(v[0]).to_degrees();
        LatLon::new(lat, lon)
    }
}

fn unit(p: LatLon) -> [f64; 3] {
    let (la, lo) = (p.lat.to_radians(), p.lon.to_radians());
    [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
}

fn add_group(
    by_code: &BTreeMap<CountryCode, &CountryStat>,
    placed: &mut BTreeSet<CountryCode>,
    groups: &mut Vec<Group>,
    codes: &[CountryCode],
    sealed: bool,
) -> Result<(), GroupingError> {
    let mut g = Group {
        members: Vec::new(),
        count: 0,
        weighted: [0.0; 3],
        plain: [0.0; 3],
        sealed,
    };
    for &code in codes {
        let s = by_code.get(&code).ok_or(GroupingError::BadSeed(code))?;
        if !placed.insert(code) {
            return Err(GroupingError::BadSeed(code));
        }
        let u = unit(s.centroid);
        for (i, c) in u.into_iter().enumerate() {
            g.weighted[i] += s.count as f64 * c;
            g.plain[i] += c;
        }
        g.count += s.count;
        g.members.push(code);
    }
    g.members.sort();
    groups.push(g);
    Ok(())
}

/// Greedy agglomeration to exactly `k` classes: the group with the fewest
/// images (ties: smallest code) merges into the group whose count-weighted
/// centroid is nearest (ties: smallest code).
pub fn compute_grouping(stats: &[CountryStat], k: usize, min_images: u64) -> Result<ClassGrouping, GroupingError> {
    compute_grouping_seeded(stats, k, min_images, &GroupingSeeds::default()).map(|r| r.grouping)
}

pub fn compute_grouping_seeded(
    stats: &[CountryStat],
    k: usize,
    min_images: u64,
    seeds: &GroupingSeeds,
) -> Result<GroupingRun, GroupingError> {
    if k == 0 {
        return Err(GroupingError::ZeroClasses);
    }
    let mut by_code: BTreeMap<CountryCode, &CountryStat> = BTreeMap::new();
    for s in stats {
        if by_code.insert(s.code, s).is_some() {
            return Err(GroupingError::Duplicate(s.code));
        }
    }
    if k > by_code.len() {
        return Err(GroupingError::TooManyClasses { k, n: by_code.len() });
    }

    let mut placed = BTreeSet::new();
    let mut groups: Vec<Group> = Vec::new();
    for &code in &seeds.sealed {
        add_group(&by_code, &mut placed, &mut groups, &[code], true)?;
    }
    for seed in seeds.groups.iter().filter(|g| !g.is_empty()) {
        if seed.iter().any(|c| seeds.sealed.contains(c)) {
            return Err(GroupingError::BadSeed(seed[0]));
        }
        add_group(&by_code, &mut placed, &mut groups, seed, false)?;
    }
    let rest: Vec<CountryCode> = by_code.keys().copied().filter(|c| !placed.contains(c)).collect();
    for code in rest {
        add_group(&by_code, &mut placed, &mut groups, &[code], false)?;
    }
    if groups.len() < k {
        return Err(GroupingError::TooManyClasses { k, n: groups.len() });
    }
    // Each merge consumes one unsealed group and at least one must remain.
    let mergeable = groups.iter().filter(|g| !g.sealed).count();
    let needed = groups.len() - k;
    if needed > 0 && mergeable < needed + 1 {
        return Err(GroupingError::TooManyClasses { k, n: groups.len() });
    }

    let mut merges = Vec::new();
    while groups.len() > k {
        let src = (0..groups.len())
            .filter(|&i| !groups[i].sealed)
            .min_by_key(|&i| (groups[i].count, groups[i].key()))
            .expect("at least two mergeable groups remain");
        let from = groups[src].centroid();
        let dst = (0..groups.len())
            .filter(|&i| i != src && !groups[i].sealed)
            .map(|i| (haversine(from, groups[i].centroid()), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(groups[a.1].key().cmp(&groups[b.1].key())))
            .expect("at least two mergeable groups remain");
        let (distance_km, dst) = dst;
        let absorbed = groups.remove(src);
        let dst = if dst > src { dst - 1 } else { dst };
        let step_from = absorbed.key();
        let target = &mut groups[dst];
        let step_into = target.key();
        target.count += absorbed.count;
        for i in 0..3 {
            target.weighted[i] += absorbed.weighted[i];
            target.plain[i] += absorbed.plain[i];
        }
        target.members.extend(absorbed.members);
        target.members.sort();
        merges.push(MergeStep {
            from: step_from,
            into: step_into,
            distance_km,
            min_count: groups.iter().map(|g| g.count).min().unwrap_or(0),
        });
    }

    let mut finished: Vec<(Vec<CountryCode>, u64)> = groups.into_iter().map(|g| (g.members, g.count)).collect();
    finished.sort();
    let class_counts: Vec<u64> = finished.iter().map(|g| g.1).collect();
    let grouping = ClassGrouping::from_groups(finished.into_iter().map(|g| g.0).collect())?;
    let undersized = class_counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c < min_images)
        .map(|(i, _)| i as ClassId)
        .collect();
    Ok(GroupingRun {
        grouping,
        merges,
        undersized,
        class_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(s: &str) -> CountryCode {
        s.parse().unwrap()
    }

    fn stat(code: &str, count: u64, lat: f64, lon: f64) -> CountryStat {
        CountryStat {
            code: cc(code),
            count,
            centroid: LatLon::new(lat, lon),
        }
    }

    #[test]
    fn load_pairs_vatican_with_italy() {
        let text = "# grouping v1\nFR 0 FR\nIT 1 IT+VA\nVA 1 IT+VA\n";
        let g = load_grouping(text.as_bytes(), Some(&[cc("IT"), cc("VA")])).unwrap();
        assert_eq!(g.k(), 2);
        assert_eq!(g.class_of(cc("VA")), g.class_of(cc("IT")));
        assert_eq!(map_country_to_class(cc("IT"), &g).unwrap(), 1);
        assert!(matches!(
            map_country_to_class(cc("ZZ"), &g),
            Err(GroupingError::UnknownCountry(_))
        ));
    }

    #[test]
    fn load_errors() {
        let text = "IT 0 IT\n";
        assert!(matches!(
            load_grouping(text.as_bytes(), Some(&[cc("IT"), cc("VA")])),
            Err(GroupingError::MissingCountry(c)) if c == cc("VA")
        ));
        assert!(matches!(
            load_grouping("IT 0 IT\nFR 2 FR\n".as_bytes(), None),
            Err(GroupingError::EmptyClass(1))
        ));
        assert!(matches!(
            load_grouping("IT 0 IT\nIT 1 X\n".as_bytes(), None),
            Err(GroupingError::Duplicate(_))
        ));
        assert!(matches!(
            load_grouping("IT 0 A\nVA 0 B\n".as_bytes(), None),
            Err(GroupingError::InconsistentLabel { .. })
        ));
    }

    #[test]
    fn write_then_load() {
        let g = ClassGrouping::from_groups(vec![vec![cc("VA"), cc("IT")], vec![cc("AE")]]).unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf, &["toy"]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# grouping v1\n# toy\nAE 0 AE\nIT 1 IT+VA\nVA 1 IT+VA\n");
        assert_eq!(load_grouping(text.as_bytes(), None).unwrap(), g);
    }

    #[test]
    fn identity_when_k_equals_n() {
        let stats = [stat("FR", 50, 46.0, 2.0), stat("DE", 60, 51.0, 10.0)];
        let g = compute_grouping(&stats, 2, 10).unwrap();
        assert_eq!(g.k(), 2);
        assert_eq!(g.class_of(cc("DE")), Some(0));
        assert_eq!(g.class_of(cc("FR")), Some(1));
    }

    #[test]
    fn smallest_merges_into_nearest() {
        // C (count 1) sits next to A.
        let stats = [
            stat("AA", 10, 0.0, 0.0),
            stat("BB", 10, 0.0, 40.0),
            stat("CC", 1, 0.0, 5.0),
        ];
        let run = compute_grouping_seeded(&stats, 2, 0, &GroupingSeeds::default()).unwrap();
        let g = &run.grouping;
        assert_eq!(g.class_of(cc("CC")), g.class_of(cc("AA")));
        assert_ne!(g.class_of(cc("BB")), g.class_of(cc("AA")));
        assert_eq!(run.merges.len(), 1);
        assert_eq!((run.merges[0].from, run.merges[0].into), (cc("CC"), cc("AA")));
    }

    #[test]
    fn sealed_country_stays_alone() {
        let stats = [
            stat("US", 1, 39.0, -98.0),
            stat("CA", 100, 56.0, -106.0),
            stat("MX", 100, 23.0, -102.0),
            stat("BR", 100, -10.0, -52.0),
        ];
        let seeds = GroupingSeeds {
            sealed: [cc("US")].into(),
            ..Default::default()
        };
        let run = compute_grouping_seeded(&stats, 3, 0, &seeds).unwrap();
        let us = run.grouping.class_of(cc("US")).unwrap();
        assert_eq!(run.grouping.members(us), vec![cc("US")]);
        assert_eq!(run.grouping.k(), 3);
    }

    #[test]
    fn too_many_classes() {
        let stats = [stat("FR", 5, 46.0, 2.0)];
        assert!(matches!(
            compute_grouping(&stats, 2, 0),
            Err(GroupingError::TooManyClasses { .. })
        ));
    }

    #[test]
    fn undersized_reported() {
        let stats = [stat("FR", 5, 46.0, 2.0), stat("DE", 500, 51.0, 10.0)];
        let run = compute_grouping_seeded(&stats, 2, 100, &GroupingSeeds::default()).unwrap();
        assert_eq!(run.undersized, vec![1]);
    }
}
