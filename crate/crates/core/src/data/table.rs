use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Unit};

/// Numeric columns of the canonical feature table, in file order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "MW")]
    Mw,
    #[serde(rename = "TPSA")]
    Tpsa,
    #[serde(rename = "molelogP")]
    MoleLogP,
    #[serde(rename = "SP")]
    Sp,
    #[serde(rename = "IE")]
    Ie,
    #[serde(rename = "FE")]
    Fe,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Mw,
        Feature::Tpsa,
        Feature::MoleLogP,
        Feature::Sp,
        Feature::Ie,
        Feature::Fe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Mw => "MW",
            Feature::Tpsa => "TPSA",
            Feature::MoleLogP => "molelogP",
            Feature::Sp => "SP",
            Feature::Ie => "IE",
            Feature::Fe => "FE",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn default_unit(self) -> Unit {
        match self {
            Feature::Mw => Unit::MASS,
            Feature::Tpsa | Feature::Sp => Unit::AREA,
            Feature::MoleLogP => Unit::DIMENSIONLESS,
            Feature::Ie | Feature::Fe => Unit::ENERGY_PER_MASS,
        }
    }
}

/// One molecule: cheap descriptors, DFT-derived features and the target.
#[derive(Clone, Debug, PartialEq)]
pub struct MoleculeRecord {
    pub id: u64,
    pub smiles: Option<String>,
    pub mw: f64,
    pub tpsa: f64,
    pub molelogp: f64,
    pub sp: f64,
    pub ie: f64,
    pub fe: f64,
}

impl MoleculeRecord {
    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Mw => self.mw,
            Feature::Tpsa => self.tpsa,
            Feature::MoleLogP => self.molelogp,
            Feature::Sp => self.sp,
            Feature::Ie => self.ie,
            Feature::Fe => self.fe,
        }
    }

    pub fn get_by_name(&self, name: &str) -> Option<f64> {
        Feature::from_name(name).map(|f| self.get(f))
    }

    fn set(&mut self, feature: Feature, value: f64) {
        match feature {
            Feature::Mw => self.mw = value,
            Feature::Tpsa => self.tpsa = value,
            Feature::MoleLogP => self.molelogp = value,
            Feature::Sp => self.sp = value,
            Feature::Ie => self.ie = value,
            Feature::Fe => self.fe = value,
        }
    }

    /// Checks finiteness and the physical sign constraints.
    pub fn validate(&self) -> Result<(), String> {
        for f in Feature::ALL {
            if !self.get(f).is_finite() {
                return Err(format!("{} is not finite", f.name()));
            }
        }
        if self.mw <= 0.0 {
            return Err(format!("MW must be > 0, got {}", self.mw));
        }
        if self.tpsa < 0.0 {
            return Err(format!("TPSA must be >= 0, got {}", self.tpsa));
        }
        if self.sp <= 0.0 {
            return Err(format!("SP must be > 0, got {}", self.sp));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnMeta {
    pub name: String,
    pub unit: Unit,
}

/// Declared column layout of a feature file.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub columns: Vec<ColumnMeta>,
}

impl Schema {
    pub const ID: &'static str = "id";
    pub const SMILES: &'static str = "smiles";

    /// `id, smiles, MW, TPSA, molelogP, SP, IE, FE`.
    pub fn canonical() -> Schema {
        let mut columns = vec![
            ColumnMeta {
                name: Self::ID.into(),
                unit: Unit::DIMENSIONLESS,
            },
            ColumnMeta {
                name: Self::SMILES.into(),
                unit: Unit::DIMENSIONLESS,
            },
        ];
        columns.extend(Feature::ALL.iter().map(|f| ColumnMeta {
            name: f.name().into(),
            unit: f.default_unit(),
        }));
        Schema { columns }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn unit_of(&self, name: &str) -> Option<Unit> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.unit)
    }
}

/// Immutable, validated feature table in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    records: Vec<MoleculeRecord>,
    schema: Schema,
    provenance: Vec<String>,
}

impl FeatureTable {
    /// Builds a table from in-memory records, applying the same checks as
    /// [`load_feature_table`].
    pub fn from_records(records: Vec<MoleculeRecord>, provenance: &str) -> Result<Self, DataError> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.validate()
                .map_err(|message| DataError::Invariant { row: i + 1, message })?;
            if !seen.insert(r.id) {
                return Err(DataError::DuplicateId { row: i + 1, id: r.id });
            }
        }
        Ok(FeatureTable {
            records,
            schema: Schema::canonical(),
            provenance: provenance.lines().map(str::to_string).collect(),
        })
    }

    pub fn records(&self) -> &[MoleculeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn unit_of(&self, feature: Feature) -> Unit {
        self.schema
            .unit_of(feature.name())
            .unwrap_or_else(|| feature.default_unit())
    }

    pub fn column(&self, feature: Feature) -> Vec<f64> {
        self.records.iter().map(|r| r.get(feature)).collect()
    }

    /// Position of every id; ids are unique by construction.
    pub fn index_of(&self) -> std::collections::HashMap<u64, usize> {
        self.records.iter().enumerate().map(|(i, r)| (r.id, i)).collect()
    }

    /// Writes the table in the canonical CSV layout. Floats use the shortest
    /// representation that parses back to the same bits.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut out = Vec::new();
        for line in &self.provenance {
            writeln!(out, "# {line}").map_err(DataError::Io)?;
        }
        for c in &self.schema.columns {
            if let Some(f) = Feature::from_name(&c.name) {
                if c.unit != f.default_unit() {
                    writeln!(out, "# unit {}={}", c.name, c.unit).map_err(DataError::Io)?;
                }
            }
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(self.schema.names())?;
            for r in &self.records {
                let mut row = vec![r.id.to_string(), r.smiles.clone().unwrap_or_default()];
                row.extend(Feature::ALL.iter().map(|f| r.get(*f).to_string()));
                w.write_record(&row)?;
            }
            w.flush().map_err(DataError::Io)?;
        }
        fs::write(path, out).map_err(DataError::Io)
    }
}

/// Loads and validates a feature CSV against `schema`.
///
/// Leading `#` lines are kept as the provenance note; a line of the form
/// `# unit NAME=UNIT` overrides the declared unit tag of a column. Any bad
/// row aborts the load, reported with its 1-based line number.
pub fn load_feature_table(path: &Path, schema: &Schema) -> Result<FeatureTable, DataError> {
    let text = fs::read_to_string(path).map_err(DataError::Io)?;
    parse_feature_table(&text, schema)
}

pub fn parse_feature_table(text: &str, schema: &Schema) -> Result<FeatureTable, DataError> {
    let mut schema = schema.clone();
    let mut provenance = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some(spec) = body.strip_prefix("unit ") {
            let (name, unit) = spec
                .split_once('=')
                .ok_or_else(|| DataError::BadUnit(spec.to_string()))?;
            let unit: Unit = unit.parse()?;
            match schema.columns.iter_mut().find(|c| c.name == name.trim()) {
                Some(c) => c.unit = unit,
                None => return Err(DataError::MissingColumn(name.trim().to_string())),
            }
        } else {
            provenance.push(body.to_string());
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let mut positions = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        let pos = header
            .iter()
            .position(|h| h == c.name)
            .ok_or_else(|| DataError::MissingColumn(c.name.clone()))?;
        positions.push(pos);
    }
    if let Some(extra) = header.iter().find(|h| !schema.names().any(|n| n == *h)) {
        return Err(DataError::UnexpectedColumn(extra.to_string()));
    }
    let col = |name: &str| -> usize {
        let idx = schema.columns.iter().position(|c| c.name == name).unwrap();
        positions[idx]
    };
    let id_pos = col(Schema::ID);
    let smiles_pos = col(Schema::SMILES);
    let feature_pos: Vec<(Feature, usize)> =
        Feature::ALL.iter().map(|f| (*f, col(f.name()))).collect();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for result in reader.records() {
        let rec = result?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |pos: usize| rec.get(pos).unwrap_or("").trim();
        let id_text = field(id_pos);
        let id: u64 = id_text.parse().map_err(|_| DataError::NonNumeric {
            row,
            column: Schema::ID.into(),
            value: id_text.to_string(),
        })?;
        let smiles = Some(field(smiles_pos).to_string()).filter(|s| !s.is_empty());
        let mut record = MoleculeRecord {
            id,
            smiles,
            mw: 0.0,
            tpsa: 0.0,
            molelogp: 0.0,
            sp: 0.0,
            ie: 0.0,
            fe: 0.0,
        };
        for (f, pos) in &feature_pos {
            let cell = field(*pos);
            let value: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                row,
                column: f.name().into(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: f.name().into(),
                });
            }
            record.set(*f, value);
        }
        record
            .validate()
            .map_err(|message| DataError::Invariant { row, message })?;
        if !seen.insert(id) {
            return Err(DataError::DuplicateId { row, id });
        }
        records.push(record);
    }
    Ok(FeatureTable {
        records,
        schema,
        provenance,
    })
}

/// Ids split into the hypothesis-generation subset and the unseen pool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPartition {
    pub hypothesis_subset: Vec<u64>,
    pub pool: Vec<u64>,
}

/// The first `n` records in file order form the hypothesis subset.
pub fn partition_first_n(table: &FeatureTable, n: usize) -> Result<DatasetPartition, DataError> {
    if n == 0 || n >= table.len() {
        return Err(DataError::PartitionRange { n, len: table.len() });
    }
    let ids: Vec<u64> = table.records.iter().map(|r| r.id).collect();
    Ok(DatasetPartition {
        hypothesis_subset: ids[..n].to_vec(),
        pool: ids[n..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,smiles,MW,TPSA,molelogP,SP,IE,FE\n";

    fn parse(body: &str) -> Result<FeatureTable, DataError> {
        parse_feature_table(&format!("{HEADER}{body}"), &Schema::canonical())
    }

    #[test]
    fn loads_three_rows_in_order() {
        let t = parse(
            "0,C,16.04,0,0.6,35.4,-2.5,-2.52\n\
             1,N,17.03,35.0,-0.4,26.2,-3.3,-3.31\n\
             2,O,18.0,20.23,-0.8,19.0,-4.2,-4.24\n",
        )
        .unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.records()[1].id, 1);
        assert_eq!(t.records()[2].smiles.as_deref(), Some("O"));
    }

    #[test]
    fn zero_spatial_extent_names_row() {
        let err = parse("0,C,16.04,0,0.6,35.4,-2.5,-2.52\n1,N,17.03,35,-0.4,0,-3.3,-3.31\n")
            .unwrap_err();
        match err {
            DataError::Invariant { row, message } => {
                assert_eq!(row, 3);
                assert!(message.contains("SP"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn error_paths() {
        let missing = parse_feature_table("id,smiles,MW\n0,C,1\n", &Schema::canonical());
        assert!(matches!(missing, Err(DataError::MissingColumn(_))));
        assert!(matches!(
            parse("0,C,abc,0,0.6,35.4,-2.5,-2.52\n"),
            Err(DataError::NonNumeric { row: 2, .. })
        ));
        assert!(matches!(
            parse("0,C,16,0,0.6,35.4,NaN,-2.52\n"),
            Err(DataError::NonFinite { row: 2, .. })
        ));
        assert!(matches!(
            parse("0,C,16,0,0.6,35.4,-2.5,-2.52\n0,N,17,0,0.6,35.4,-2.5,-2.52\n"),
            Err(DataError::DuplicateId { row: 3, id: 0 })
        ));
        let extra = parse_feature_table(
            "id,smiles,MW,TPSA,molelogP,SP,IE,FE,X\n",
            &Schema::canonical(),
        );
        assert!(matches!(extra, Err(DataError::UnexpectedColumn(_))));
    }

    #[test]
    fn unit_override_and_provenance() {
        let text = format!("# synthetic\n# unit SP=area\n{HEADER}0,,16,0,0.6,35.4,-2.5,-2.52\n");
        let t = parse_feature_table(&text, &Schema::canonical()).unwrap();
        assert_eq!(t.provenance(), ["synthetic"]);
        assert_eq!(t.unit_of(Feature::Sp), Unit::AREA);
        assert_eq!(t.records()[0].smiles, None);
    }

    #[test]
    fn partition_edges() {
        let t = parse("0,C,16,0,0.6,35.4,-2.5,-2.52\n1,N,17,0,0.6,35.4,-2.5,-2.52\n").unwrap();
        let p = partition_first_n(&t, 1).unwrap();
        assert_eq!(p.hypothesis_subset, vec![0]);
        assert_eq!(p.pool, vec![1]);
        assert!(partition_first_n(&t, 2).is_err());
        assert!(partition_first_n(&t, 0).is_err());
    }

    #[test]
    fn qm9_subset_fraction() {
        let frac: f64 = 1000.0 / 133_885.0 * 100.0;
        assert!((frac - 0.747).abs() < 1e-3);
    }
}
