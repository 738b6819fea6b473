//! Reading and writing the panel file bundle.
//!
//! A bundle is a directory holding `firms.csv`, `facility_states.csv`,
//! `rates.csv`, facility terms in `facilities.jsonl` (or the flat
//! `facilities.csv`), and optionally `lenders.csv`. Amounts are USD millions,
//! rates annual percent, basis points integers where integral. Empty CSV
//! cells are missing values.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use csv::StringRecord;

use crate::contract::{
    validate_facility, AbrCandidate, AbrReference, BaseRateOption, DefaultTerms, Facility, FeeSchedule,
    LiborTenorRule, SpreadSpec, UpfrontFee, UtilizationFee,
};
use crate::market::{rating_ordinal, FacilityQuarterState, FirmQuarter, LenderQuarter, RateEnvironment};
use crate::quarter::Quarter;
use crate::units::{Bps, Usd};

pub const FIRMS_FILE: &str = "firms.csv";
pub const STATES_FILE: &str = "facility_states.csv";
pub const RATES_FILE: &str = "rates.csv";
pub const LENDERS_FILE: &str = "lenders.csv";
pub const FACILITIES_JSONL: &str = "facilities.jsonl";
pub const FACILITIES_CSV: &str = "facilities.csv";

/// Non-field columns of `firms.csv`; every other column is an accounting mnemonic.
pub const FIRM_META_COLUMNS: [&str; 6] = [
    "firm_id",
    "quarter",
    "rating",
    "daily_return_stddev_12m",
    "monthly_return_stddev_12m_annualized",
    "stock_return_12m",
];

pub const STATE_COLUMNS: [&str; 9] = [
    "facility_id",
    "quarter",
    "outstanding_borrowings",
    "letters_of_credit",
    "borrowing_base",
    "reported_unused_available",
    "technical_default",
    "waiver_granted",
    "termination_quarter",
];

pub const RATE_COLUMNS: [&str; 9] = [
    "quarter",
    "libor_1m",
    "libor_2m",
    "libor_3m",
    "libor_6m",
    "prime",
    "fed_funds",
    "tbill_3m",
    "market_index_return",
];

pub const LENDER_COLUMNS: [&str; 3] = ["lender_id", "quarter", "stock_return"];

/// Header of the flat facility file. Spreads and fees there are fixed; grid
/// pricing needs the JSON form.
pub const FACILITY_CSV_COLUMNS: [&str; 27] = [
    "facility_id",
    "borrower_id",
    "lender_id",
    "origination_quarter",
    "stated_maturity_quarter",
    "maturity_months",
    "commitment",
    "secured",
    "syndicated",
    "restructuring_purpose",
    "has_borrowing_base",
    "has_lc_program",
    "libor_tenor",
    "libor_spread_bps",
    "abr_spread_bps",
    "abr_fed_funds_add_on_bps",
    "fixed_rate_pct",
    "commitment_fee_bps",
    "annual_fee_bps",
    "utilization_fee_bps",
    "utilization_threshold",
    "upfront_fee",
    "upfront_paid_quarter",
    "default_margin_bps",
    "restrict_to_abr",
    "loan_path_id",
    "predecessor_id",
];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("{file}: duplicate key {key}")]
    Duplicate { file: String, key: String },
    #[error("{file}: {message}")]
    Integrity { file: String, message: String },
    #[error("{file}: {key} is invalid: {}", violations.join("; "))]
    Invalid { file: String, key: String, violations: Vec<String> },
}

impl IngestError {
    fn parse(file: &str, line: u64, message: impl Into<String>) -> Self {
        IngestError::Parse { file: file.to_string(), line, message: message.into() }
    }
}

/// A validated, immutable panel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Panel {
    /// Sorted by facility id.
    pub facilities: Vec<Facility>,
    pub firms: BTreeMap<(String, Quarter), FirmQuarter>,
    pub states: BTreeMap<(String, Quarter), FacilityQuarterState>,
    pub rates: BTreeMap<Quarter, RateEnvironment>,
    pub lenders: BTreeMap<(String, Quarter), LenderQuarter>,
    /// Firms with no facility and facilities with no state rows.
    pub orphans: Vec<String>,
}

impl Panel {
    pub fn facility(&self, id: &str) -> Option<&Facility> {
        self.facilities
            .binary_search_by(|f| f.facility_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.facilities[i])
    }

    /// Firm quarters of `firm_id` in ascending order.
    pub fn firm_history(&self, firm_id: &str) -> Vec<&FirmQuarter> {
        self.firms
            .range((firm_id.to_string(), Quarter::from_index(i32::MIN))..=(firm_id.to_string(), Quarter::from_index(i32::MAX)))
            .map(|(_, v)| v)
            .collect()
    }

    /// State rows of `facility_id` in ascending order.
    pub fn state_history(&self, facility_id: &str) -> Vec<&FacilityQuarterState> {
        let id = facility_id.to_string();
        self.states
            .range((id.clone(), Quarter::from_index(i32::MIN))..=(id, Quarter::from_index(i32::MAX)))
            .map(|(_, v)| v)
            .collect()
    }

    /// Cross-checks keys and invariants and fills `orphans`.
    pub fn validate(&mut self) -> Result<(), IngestError> {
        let mut seen = BTreeSet::new();
        for f in &self.facilities {
            if !seen.insert(f.facility_id.as_str()) {
                return Err(IngestError::Duplicate { file: "facilities".into(), key: f.facility_id.clone() });
            }
            let v = validate_facility(f);
            if !v.is_empty() {
                return Err(IngestError::Invalid { file: "facilities".into(), key: f.facility_id.clone(), violations: v });
            }
        }
        self.facilities.sort_by(|a, b| a.facility_id.cmp(&b.facility_id));
        let borrowers: BTreeSet<&str> = self.firms.keys().map(|(f, _)| f.as_str()).collect();
        for f in &self.facilities {
            if !borrowers.contains(f.borrower_id.as_str()) {
                return Err(IngestError::Integrity {
                    file: "facilities".into(),
                    message: format!("facility {} references unknown borrower {}", f.facility_id, f.borrower_id),
                });
            }
        }
        for ((id, q), s) in &self.states {
            if self.facility(id).is_none() {
                return Err(IngestError::Integrity {
                    file: STATES_FILE.into(),
                    message: format!("state {q} references unknown facility {id}"),
                });
            }
            let v = s.violations();
            if !v.is_empty() {
                return Err(IngestError::Invalid { file: STATES_FILE.into(), key: format!("{id} {q}"), violations: v });
            }
        }
        for ((id, q), f) in &self.firms {
            let mut v = Vec::new();
            if matches!(f.fields.get("atq"), Some(a) if !(*a > 0.0)) {
                v.push("atq > 0".to_string());
            }
            let sds = [f.daily_return_stddev_12m, f.monthly_return_stddev_12m_annualized];
            if sds.iter().flatten().any(|s| !(*s >= 0.0)) {
                v.push("return standard deviations >= 0".to_string());
            }
            if !v.is_empty() {
                return Err(IngestError::Invalid { file: FIRMS_FILE.into(), key: format!("{id} {q}"), violations: v });
            }
        }
        let used: BTreeSet<&str> = self.facilities.iter().map(|f| f.borrower_id.as_str()).collect();
        let with_states: BTreeSet<&str> = self.states.keys().map(|(f, _)| f.as_str()).collect();
        let mut orphans: Vec<String> =
            borrowers.iter().filter(|b| !used.contains(*b)).map(|b| format!("firm {b} has no facility")).collect();
        orphans.extend(
            self.facilities
                .iter()
                .filter(|f| !with_states.contains(f.facility_id.as_str()))
                .map(|f| format!("facility {} has no state rows", f.facility_id)),
        );
        self.orphans = orphans;
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

struct Table {
    file: String,
    header: Vec<String>,
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Table, IngestError> {
        let file = path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned());
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e.into() })?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| IngestError::parse(&file, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                IngestError::parse(&file, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Table { file, header, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, names: &[&str]) -> Result<Vec<usize>, IngestError> {
        names
            .iter()
            .map(|n| self.col(n).ok_or_else(|| IngestError::parse(&self.file, 1, format!("missing column {n}"))))
            .collect()
    }
}

struct Row<'a> {
    file: &'a str,
    line: u64,
    rec: &'a StringRecord,
}

impl Row<'_> {
    fn err(&self, msg: String) -> IngestError {
        IngestError::parse(self.file, self.line, msg)
    }

    fn raw(&self, idx: Option<usize>) -> Option<&str> {
        idx.and_then(|i| self.rec.get(i)).filter(|s| !s.is_empty())
    }

    fn text(&self, idx: usize, name: &str) -> Result<String, IngestError> {
        self.raw(Some(idx)).map(str::to_string).ok_or_else(|| self.err(format!("empty {name}")))
    }

    fn opt_f64(&self, idx: Option<usize>, name: &str) -> Result<Option<f64>, IngestError> {
        match self.raw(idx) {
            None => Ok(None),
            Some(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(self.err(format!("{name}: not a finite number: {s:?}"))),
            },
        }
    }

    fn f64(&self, idx: usize, name: &str) -> Result<f64, IngestError> {
        self.opt_f64(Some(idx), name)?.ok_or_else(|| self.err(format!("empty {name}")))
    }

    fn quarter(&self, idx: usize, name: &str) -> Result<Quarter, IngestError> {
        self.opt_quarter(Some(idx), name)?.ok_or_else(|| self.err(format!("empty {name}")))
    }

    fn opt_quarter(&self, idx: Option<usize>, name: &str) -> Result<Option<Quarter>, IngestError> {
        self.raw(idx).map(|s| s.parse::<Quarter>().map_err(|e| self.err(format!("{name}: {e}")))).transpose()
    }

    fn bool(&self, idx: Option<usize>, name: &str) -> Result<bool, IngestError> {
        match self.raw(idx).map(str::to_ascii_lowercase).as_deref() {
            None | Some("0") | Some("false") => Ok(false),
            Some("1") | Some("true") => Ok(true),
            Some(s) => Err(self.err(format!("{name}: not a boolean: {s:?}"))),
        }
    }
}

fn rows(t: &Table) -> impl Iterator<Item = Row<'_>> {
    t.rows.iter().map(move |(line, rec)| Row { file: &t.file, line: *line, rec })
}

pub fn read_firms(path: &Path) -> Result<BTreeMap<(String, Quarter), FirmQuarter>, IngestError> {
    let t = Table::read(path)?;
    let req = t.require(&FIRM_META_COLUMNS[..2])?;
    let meta = |n: &str| t.col(n);
    let field_cols: Vec<(usize, &str)> = t
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| !FIRM_META_COLUMNS.contains(&h.as_str()))
        .map(|(i, h)| (i, h.as_str()))
        .collect();
    let mut out = BTreeMap::new();
    for r in rows(&t) {
        let mut fq = FirmQuarter::new(r.text(req[0], "firm_id")?, r.quarter(req[1], "quarter")?);
        fq.rating = match r.raw(meta("rating")) {
            None => None,
            Some(s) => Some(rating_ordinal(s).ok_or_else(|| r.err(format!("unknown rating {s:?}")))?),
        };
        fq.daily_return_stddev_12m = r.opt_f64(meta("daily_return_stddev_12m"), "daily_return_stddev_12m")?;
        fq.monthly_return_stddev_12m_annualized = r.opt_f64(
            meta("monthly_return_stddev_12m_annualized"),
            "monthly_return_stddev_12m_annualized",
        )?;
        fq.stock_return_12m = r.opt_f64(meta("stock_return_12m"), "stock_return_12m")?;
        for (i, name) in &field_cols {
            if let Some(v) = r.opt_f64(Some(*i), name)? {
                fq.set(name, v);
            }
        }
        let key = (fq.firm_id.clone(), fq.quarter);
        if out.contains_key(&key) {
            return Err(IngestError::Duplicate { file: t.file.clone(), key: format!("{} {}", key.0, key.1) });
        }
        out.insert(key, fq);
    }
    Ok(out)
}

pub fn read_states(path: &Path) -> Result<BTreeMap<(String, Quarter), FacilityQuarterState>, IngestError> {
    let t = Table::read(path)?;
    let req = t.require(&STATE_COLUMNS[..3])?;
    let c = |n: &str| t.col(n);
    let mut out = BTreeMap::new();
    for r in rows(&t) {
        let s = FacilityQuarterState {
            facility_id: r.text(req[0], "facility_id")?,
            quarter: r.quarter(req[1], "quarter")?,
            outstanding_borrowings: r.f64(req[2], "outstanding_borrowings")?,
            letters_of_credit: r.opt_f64(c("letters_of_credit"), "letters_of_credit")?,
            borrowing_base: r.opt_f64(c("borrowing_base"), "borrowing_base")?,
            reported_unused_available: r.opt_f64(c("reported_unused_available"), "reported_unused_available")?,
            technical_default: r.bool(c("technical_default"), "technical_default")?,
            waiver_granted: r.bool(c("waiver_granted"), "waiver_granted")?,
            termination_quarter: r.opt_quarter(c("termination_quarter"), "termination_quarter")?,
        };
        let key = (s.facility_id.clone(), s.quarter);
        if out.contains_key(&key) {
            return Err(IngestError::Duplicate { file: t.file.clone(), key: format!("{} {}", key.0, key.1) });
        }
        out.insert(key, s);
    }
    Ok(out)
}

pub fn read_rates(path: &Path) -> Result<BTreeMap<Quarter, RateEnvironment>, IngestError> {
    let t = Table::read(path)?;
    let req = t.require(&["quarter", "prime", "fed_funds", "tbill_3m", "market_index_return"])?;
    let c = |n: &str| t.col(n);
    let mut out = BTreeMap::new();
    for r in rows(&t) {
        let env = RateEnvironment {
            quarter: r.quarter(req[0], "quarter")?,
            libor_1m: r.opt_f64(c("libor_1m"), "libor_1m")?,
            libor_2m: r.opt_f64(c("libor_2m"), "libor_2m")?,
            libor_3m: r.opt_f64(c("libor_3m"), "libor_3m")?,
            libor_6m: r.opt_f64(c("libor_6m"), "libor_6m")?,
            prime: r.f64(req[1], "prime")?,
            fed_funds: r.f64(req[2], "fed_funds")?,
            tbill_3m: r.f64(req[3], "tbill_3m")?,
            market_index_return: r.f64(req[4], "market_index_return")?,
        };
        if out.insert(env.quarter, env.clone()).is_some() {
            return Err(IngestError::Duplicate { file: t.file.clone(), key: env.quarter.to_string() });
        }
    }
    Ok(out)
}

pub fn read_lenders(path: &Path) -> Result<BTreeMap<(String, Quarter), LenderQuarter>, IngestError> {
    let t = Table::read(path)?;
    let req = t.require(&LENDER_COLUMNS)?;
    let mut out = BTreeMap::new();
    for r in rows(&t) {
        let l = LenderQuarter {
            lender_id: r.text(req[0], "lender_id")?,
            quarter: r.quarter(req[1], "quarter")?,
            stock_return: r.f64(req[2], "stock_return")?,
        };
        let key = (l.lender_id.clone(), l.quarter);
        if out.contains_key(&key) {
            return Err(IngestError::Duplicate { file: t.file.clone(), key: format!("{} {}", key.0, key.1) });
        }
        out.insert(key, l);
    }
    Ok(out)
}

pub fn read_facilities_jsonl(path: &Path) -> Result<Vec<Facility>, IngestError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let name = path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Facility =
            serde_json::from_str(&line).map_err(|e| IngestError::parse(&name, i as u64 + 1, e.to_string()))?;
        out.push(f);
    }
    Ok(out)
}

pub fn read_facilities_csv(path: &Path) -> Result<Vec<Facility>, IngestError> {
    let t = Table::read(path)?;
    let req = t.require(&[
        "facility_id",
        "borrower_id",
        "lender_id",
        "origination_quarter",
        "stated_maturity_quarter",
        "commitment",
        "loan_path_id",
    ])?;
    let c = |n: &str| t.col(n);
    let mut out = Vec::new();
    for r in rows(&t) {
        let bps = |n: &str| r.opt_f64(c(n), n);
        let mut options = Vec::new();
        if let Some(s) = bps("libor_spread_bps")? {
            let tenor = match r.raw(c("libor_tenor")).unwrap_or("borrower_choice") {
                "1m" => LiborTenorRule::M1,
                "2m" => LiborTenorRule::M2,
                "3m" => LiborTenorRule::M3,
                "6m" => LiborTenorRule::M6,
                "borrower_choice" => LiborTenorRule::BorrowerChoice,
                other => return Err(r.err(format!("unknown LIBOR tenor {other:?}"))),
            };
            options.push(BaseRateOption::libor(tenor, SpreadSpec::fixed(s)));
        }
        if let Some(s) = bps("abr_spread_bps")? {
            let mut cands = vec![AbrCandidate { reference: AbrReference::Prime, add_on: None }];
            if let Some(a) = bps("abr_fed_funds_add_on_bps")? {
                cands.push(AbrCandidate::new(AbrReference::FedFunds, a));
            }
            options.push(BaseRateOption::abr(cands, SpreadSpec::fixed(s)));
        }
        let utilization_fee = match bps("utilization_fee_bps")? {
            None => None,
            Some(u) => Some(UtilizationFee {
                fee: SpreadSpec::fixed(u),
                threshold: r
                    .opt_f64(c("utilization_threshold"), "utilization_threshold")?
                    .ok_or_else(|| r.err("utilization fee without threshold".into()))?,
            }),
        };
        let upfront_fee = match r.opt_f64(c("upfront_fee"), "upfront_fee")? {
            None => None,
            Some(a) => Some(UpfrontFee {
                amount: Usd(a),
                paid_quarter: match r.opt_quarter(c("upfront_paid_quarter"), "upfront_paid_quarter")? {
                    Some(q) => q,
                    None => r.quarter(req[3], "origination_quarter")?,
                },
            }),
        };
        out.push(Facility {
            facility_id: r.text(req[0], "facility_id")?,
            borrower_id: r.text(req[1], "borrower_id")?,
            lender_id: r.text(req[2], "lender_id")?,
            origination_quarter: r.quarter(req[3], "origination_quarter")?,
            stated_maturity_quarter: r.quarter(req[4], "stated_maturity_quarter")?,
            maturity_months: r.opt_f64(c("maturity_months"), "maturity_months")?.map(|m| m as u32),
            commitment: Usd(r.f64(req[5], "commitment")?),
            secured: r.bool(c("secured"), "secured")?,
            syndicated: r.bool(c("syndicated"), "syndicated")?,
            restructuring_purpose: r.bool(c("restructuring_purpose"), "restructuring_purpose")?,
            has_borrowing_base: r.bool(c("has_borrowing_base"), "has_borrowing_base")?,
            has_lc_program: r.bool(c("has_lc_program"), "has_lc_program")?,
            base_rate_options: options,
            fixed_rate_pct: r.opt_f64(c("fixed_rate_pct"), "fixed_rate_pct")?,
            fee_schedule: FeeSchedule {
                commitment_fee: bps("commitment_fee_bps")?.map(SpreadSpec::fixed),
                annual_fee: bps("annual_fee_bps")?.map(SpreadSpec::fixed),
                utilization_fee,
                upfront_fee,
            },
            pricing_grid: None,
            default_terms: DefaultTerms {
                default_margin_bps: Bps(bps("default_margin_bps")?.unwrap_or(0.0)),
                restrict_to_abr: r.bool(c("restrict_to_abr"), "restrict_to_abr")?,
            },
            loan_path_id: r.text(req[6], "loan_path_id")?,
            predecessor_id: r.raw(c("predecessor_id")).map(str::to_string),
        });
    }
    Ok(out)
}

/// Reads and validates the bundle in `dir`.
pub fn ingest_panel(dir: &Path) -> Result<Panel, IngestError> {
    let jsonl = dir.join(FACILITIES_JSONL);
    let facilities = if jsonl.exists() {
        read_facilities_jsonl(&jsonl)?
    } else {
        read_facilities_csv(&dir.join(FACILITIES_CSV))?
    };
    let lenders_path = dir.join(LENDERS_FILE);
    let mut panel = Panel {
        facilities,
        firms: read_firms(&dir.join(FIRMS_FILE))?,
        states: read_states(&dir.join(STATES_FILE))?,
        rates: read_rates(&dir.join(RATES_FILE))?,
        lenders: if lenders_path.exists() { read_lenders(&lenders_path)? } else { BTreeMap::new() },
        orphans: Vec::new(),
    };
    panel.validate()?;
    Ok(panel)
}

/// Shortest decimal that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e.into() })?;
    let csv_err = |e: csv::Error| IngestError::Io { path: path.to_path_buf(), source: e.into() };
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `panel` as a bundle that [`ingest_panel`] reads back unchanged.
pub fn write_panel(dir: &Path, panel: &Panel) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let fields: BTreeSet<&str> = panel.firms.values().flat_map(|f| f.fields.keys().map(String::as_str)).collect();
    let mut header: Vec<&str> = FIRM_META_COLUMNS.to_vec();
    header.extend(fields.iter().copied());
    write_csv(
        &dir.join(FIRMS_FILE),
        &header,
        panel.firms.values().map(|f| {
            let mut r = vec![
                f.firm_id.clone(),
                f.quarter.to_string(),
                f.rating.map(|r| r.to_string()).unwrap_or_default(),
                opt(f.daily_return_stddev_12m),
                opt(f.monthly_return_stddev_12m_annualized),
                opt(f.stock_return_12m),
            ];
            r.extend(fields.iter().map(|m| opt(f.fields.get(*m).copied())));
            r
        }),
    )?;

    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    write_csv(
        &dir.join(STATES_FILE),
        &STATE_COLUMNS,
        panel.states.values().map(|s| {
            vec![
                s.facility_id.clone(),
                s.quarter.to_string(),
                num(s.outstanding_borrowings),
                opt(s.letters_of_credit),
                opt(s.borrowing_base),
                opt(s.reported_unused_available),
                flag(s.technical_default),
                flag(s.waiver_granted),
                s.termination_quarter.map(|q| q.to_string()).unwrap_or_default(),
            ]
        }),
    )?;

    write_csv(
        &dir.join(RATES_FILE),
        &RATE_COLUMNS,
        panel.rates.values().map(|r| {
            vec![
                r.quarter.to_string(),
                opt(r.libor_1m),
                opt(r.libor_2m),
                opt(r.libor_3m),
                opt(r.libor_6m),
                num(r.prime),
                num(r.fed_funds),
                num(r.tbill_3m),
                num(r.market_index_return),
            ]
        }),
    )?;

    if !panel.lenders.is_empty() {
        write_csv(
            &dir.join(LENDERS_FILE),
            &LENDER_COLUMNS,
            panel.lenders.values().map(|l| vec![l.lender_id.clone(), l.quarter.to_string(), num(l.stock_return)]),
        )?;
    }

    let path = dir.join(FACILITIES_JSONL);
    let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
    for f in &panel.facilities {
        let line = serde_json::to_string(f).map_err(|e| IngestError::Io { path: path.clone(), source: e.into() })?;
        writeln!(out, "{line}").map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))
}
