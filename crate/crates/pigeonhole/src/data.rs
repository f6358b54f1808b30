//! Data handling: synthetic generation, missingness, pruning, and ingestion
//! of ratings files into [`ObservedTable`]s.
//!
//! The synthetic path draws a fully observed table from the model itself
//! (`generate_balanced`), optionally deletes cells completely at random
//! (`apply_mcar`), and removes empty rows and columns (`prune_empty`). The
//! real-data path (`load_ratings`) parses a ratings file, applies minimum
//! activity filters, engineers per-cell covariates, and reindexes the
//! surviving users and items into contiguous table coordinates. Tables round
//! trip through a plain CSV format via `write_table_csv` / `read_table_csv`.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Cell, ObservedTable, VarianceScale};

/// Independent normal distributions for the covariate coordinates: cell
/// covariate `k` is drawn as `N(means[k], variances[k])`. A zero variance
/// makes the coordinate constant, which is how an intercept column is
/// expressed.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateDist {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl CovariateDist {
    /// The same `N(mean, variance)` for all `p` coordinates.
    pub fn iid(p: usize, mean: f64, variance: f64) -> Self {
        CovariateDist {
            means: vec![mean; p],
            variances: vec![variance; p],
        }
    }

    pub fn p(&self) -> usize {
        self.means.len()
    }

    fn validate(&self) -> Result<()> {
        if self.means.is_empty() || self.means.len() != self.variances.len() {
            return Err(Error::Dimension(
                "covariate means and variances must be non-empty and equally long".into(),
            ));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument(
                "covariate means must be finite".into(),
            ));
        }
        if self.variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "covariate variances must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Recipe for a fully observed synthetic table. Variance components are
/// given on the variance scale so that exact zeros are expressible; the
/// generator draws `Y_ij = x_ij' b + alpha_i + beta_j + e_ij` with
/// `alpha_i ~ N(0, variances.alpha)` and so on.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub rows: usize,
    pub cols: usize,
    pub b: Vec<f64>,
    pub variances: VarianceScale,
    pub covariates: CovariateDist,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::Dimension(
                "generated tables need at least 2 rows and 2 columns".into(),
            ));
        }
        if self.b.is_empty() || self.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "coefficients b must be non-empty and finite".into(),
            ));
        }
        self.covariates.validate()?;
        if self.b.len() != self.covariates.p() {
            return Err(Error::Dimension(format!(
                "b has {} coefficients but the covariate distribution has {}",
                self.b.len(),
                self.covariates.p()
            )));
        }
        for (name, value) in [
            ("sigma2_alpha", self.variances.alpha),
            ("sigma2_beta", self.variances.beta),
            ("sigma2_e", self.variances.e),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::DegenerateVariance { name, value });
            }
        }
        Ok(())
    }
}

/// A generated table together with the latent effects that produced it,
/// kept around so tests and diagnostics can condition on the truth.
#[derive(Clone, Debug)]
pub struct GeneratedData {
    pub table: ObservedTable,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Draws a fully observed table from the crossed mixed effects model. The
/// draw order is fixed (row effects, column effects, then covariates and
/// noise cell by cell in row-major order), so a seed pins the exact output.
pub fn generate_balanced(spec: &GeneratorSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let p = spec.b.len();
    let sd_alpha = spec.variances.alpha.sqrt();
    let sd_beta = spec.variances.beta.sqrt();
    let sd_e = spec.variances.e.sqrt();
    let sd_x: Vec<f64> = spec.covariates.variances.iter().map(|v| v.sqrt()).collect();

    let alpha: Vec<f64> = (0..spec.rows)
        .map(|_| sd_alpha * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let beta: Vec<f64> = (0..spec.cols)
        .map(|_| sd_beta * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut cells = Vec::with_capacity(spec.rows * spec.cols);
    for i in 0..spec.rows {
        for j in 0..spec.cols {
            let mut x = Vec::with_capacity(p);
            for k in 0..p {
                x.push(spec.covariates.means[k] + sd_x[k] * rng.sample::<f64, _>(StandardNormal));
            }
            let e = sd_e * rng.sample::<f64, _>(StandardNormal);
            let mean: f64 = x.iter().zip(&spec.b).map(|(xv, bv)| xv * bv).sum();
            cells.push(Cell {
                row: i,
                col: j,
                y: mean + alpha[i] + beta[j] + e,
                x,
            });
        }
    }
    let table = ObservedTable::from_cells(spec.rows, spec.cols, p, cells)?;
    Ok(GeneratedData { table, alpha, beta })
}

/// Deletes each cell independently with probability `p_missing` (missing
/// completely at random), then prunes rows and columns left without
/// observations. `p_missing` must lie in `[0, 1)`.
pub fn apply_mcar(table: &ObservedTable, p_missing: f64, seed: u64) -> Result<ObservedTable> {
    if !(0.0..1.0).contains(&p_missing) {
        return Err(Error::InvalidArgument(format!(
            "missingness probability must lie in [0, 1), got {p_missing}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut kept = Vec::with_capacity(table.n());
    for k in 0..table.n() {
        if rng.gen::<f64>() >= p_missing {
            kept.push(Cell {
                row: table.row_of(k),
                col: table.col_of(k),
                y: table.y(k),
                x: table.x(k).to_vec(),
            });
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyTable);
    }
    let thinned = ObservedTable::from_cells(table.rows(), table.cols(), table.p(), kept)?
        .with_ids(
            (0..table.rows()).map(|i| table.row_id(i)).collect(),
            (0..table.cols()).map(|j| table.col_id(j)).collect(),
        )?;
    prune_empty(&thinned)
}

/// Removes rows and columns that contain no observations, reindexing the
/// survivors contiguously while carrying their original identities along.
/// Deleting an empty row or column never removes a cell, so a single pass
/// reaches the fixpoint; the result satisfies [`ObservedTable::is_pruned`]
/// and pruning an already pruned table is the identity.
pub fn prune_empty(table: &ObservedTable) -> Result<ObservedTable> {
    if table.n() == 0 {
        return Err(Error::EmptyTable);
    }
    let keep_rows: Vec<usize> = (0..table.rows()).filter(|&i| table.row_count(i) > 0).collect();
    let keep_cols: Vec<usize> = (0..table.cols()).filter(|&j| table.col_count(j) > 0).collect();
    if keep_rows.len() == table.rows() && keep_cols.len() == table.cols() {
        return Ok(table.clone());
    }
    let mut row_map = vec![usize::MAX; table.rows()];
    for (new, &old) in keep_rows.iter().enumerate() {
        row_map[old] = new;
    }
    let mut col_map = vec![usize::MAX; table.cols()];
    for (new, &old) in keep_cols.iter().enumerate() {
        col_map[old] = new;
    }
    let cells = (0..table.n())
        .map(|k| Cell {
            row: row_map[table.row_of(k)],
            col: col_map[table.col_of(k)],
            y: table.y(k),
            x: table.x(k).to_vec(),
        })
        .collect();
    ObservedTable::from_cells(keep_rows.len(), keep_cols.len(), table.p(), cells)?.with_ids(
        keep_rows.iter().map(|&i| table.row_id(i)).collect(),
        keep_cols.iter().map(|&j| table.col_id(j)).collect(),
    )
}

/// How per-cell covariates are built during ingestion.
#[derive(Clone, Debug, PartialEq)]
pub enum CovariateSpec {
    /// Rating-specific predictors engineered from the ratings themselves and
    /// an item metadata file: an intercept, the per-user positivity flag, the
    /// three-dimensional genre code of the item, and the recency-windowed
    /// popularity of the item at the time of the rating.
    Engineered { metadata_path: PathBuf },
    /// An optional intercept followed by numeric columns copied verbatim
    /// from the ratings file (zero-based indices).
    Columns { columns: Vec<usize>, intercept: bool },
}

/// Column layout and preprocessing rules for a ratings file.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingsSchema {
    /// Field separator. `None` auto-detects `::`, `,`, or a tab from the
    /// first data line.
    pub delimiter: Option<String>,
    pub has_header: bool,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    /// Orders ratings for the popularity window; ties and absent timestamps
    /// fall back to file order.
    pub timestamp_col: Option<usize>,
    /// Users with fewer ratings than this are dropped entirely (0 disables).
    pub min_user_count: usize,
    /// Items with fewer ratings than this are dropped entirely (0 disables).
    pub min_item_count: usize,
    /// A rating counts as positive when strictly above this cutoff.
    pub positive_cutoff: f64,
    /// Maximum number of most recent prior ratings in the popularity window.
    pub recency_window: usize,
    /// Whether the rating being featurized is itself part of its popularity
    /// window. Off by default: the window holds strictly earlier ratings.
    pub window_includes_current: bool,
    pub covariates: CovariateSpec,
}

impl RatingsSchema {
    /// Layout of the MovieLens `ratings.dat` / `movies.dat` pair:
    /// `user::item::rating::timestamp`, items with fewer than 20 ratings
    /// dropped, engineered covariates from the movie metadata.
    pub fn movielens(metadata_path: impl Into<PathBuf>) -> Self {
        RatingsSchema {
            delimiter: None,
            has_header: false,
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            timestamp_col: Some(3),
            min_user_count: 0,
            min_item_count: 20,
            positive_cutoff: 3.0,
            recency_window: 30,
            window_includes_current: false,
            covariates: CovariateSpec::Engineered {
                metadata_path: metadata_path.into(),
            },
        }
    }

    /// Layout of the lecture evaluation CSV exported from R (leading
    /// row-name column, header, quoted fields): students as rows, lecturers
    /// as columns, students with fewer than 5 evaluations dropped, covariates
    /// `[1, studage, lectage, service]`.
    pub fn insteval() -> Self {
        RatingsSchema {
            delimiter: None,
            has_header: true,
            user_col: 1,
            item_col: 2,
            rating_col: 3,
            timestamp_col: None,
            min_user_count: 5,
            min_item_count: 0,
            positive_cutoff: 3.0,
            recency_window: 30,
            window_includes_current: false,
            covariates: CovariateSpec::Columns {
                columns: vec![4, 5, 6],
                intercept: true,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(d) = &self.delimiter {
            if d.is_empty() {
                return Err(Error::InvalidArgument("delimiter must be non-empty".into()));
            }
        }
        if self.user_col == self.item_col
            || self.user_col == self.rating_col
            || self.item_col == self.rating_col
        {
            return Err(Error::InvalidArgument(
                "user, item, and rating columns must be distinct".into(),
            ));
        }
        if !self.positive_cutoff.is_finite() {
            return Err(Error::InvalidArgument(
                "positive-rating cutoff must be finite".into(),
            ));
        }
        if self.recency_window == 0 {
            return Err(Error::InvalidArgument(
                "recency window must hold at least one rating".into(),
            ));
        }
        if let CovariateSpec::Columns { columns, intercept } = &self.covariates {
            if columns.is_empty() && !intercept {
                return Err(Error::InvalidArgument(
                    "covariate spec selects no columns and no intercept".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Bookkeeping from [`load_ratings`]: every parsed rating is either retained,
/// removed by an activity filter, or (in principle) lost to pruning, so
/// `retained == raw - filtered` always holds for cell counts while
/// `pruned_rows`/`pruned_cols` count removed index labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub raw: usize,
    pub filtered: usize,
    pub pruned_rows: usize,
    pub pruned_cols: usize,
    pub retained: usize,
}

struct RawRating {
    user: u64,
    item: u64,
    rating: f64,
    timestamp: i64,
    order: usize,
    line: usize,
    extra: Vec<f64>,
}

/// Parses a ratings file into a pruned [`ObservedTable`]. Users and items
/// are relabelled by their sorted numeric ids; the original ids stay
/// reachable through [`ObservedTable::row_id`] / [`ObservedTable::col_id`].
pub fn load_ratings(path: &Path, schema: &RatingsSchema) -> Result<(ObservedTable, IngestReport)> {
    schema.validate()?;
    let path_str = path.display().to_string();
    let lines = read_lossy_lines(path)?;

    let extra_cols: &[usize] = match &schema.covariates {
        CovariateSpec::Columns { columns, .. } => columns,
        CovariateSpec::Engineered { .. } => &[],
    };
    let needed = schema
        .user_col
        .max(schema.item_col)
        .max(schema.rating_col)
        .max(schema.timestamp_col.unwrap_or(0))
        .max(extra_cols.iter().copied().max().unwrap_or(0))
        + 1;

    let mut delimiter = schema.delimiter.clone();
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    let mut raw: Vec<RawRating> = Vec::new();
    let mut header_pending = schema.has_header;
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            if delimiter.is_none() {
                delimiter = Some(detect_delimiter(line, &path_str, lineno)?);
            }
            continue;
        }
        let delim = match &delimiter {
            Some(d) => d.clone(),
            None => {
                let d = detect_delimiter(line, &path_str, lineno)?;
                delimiter = Some(d.clone());
                d
            }
        };
        let fields: Vec<&str> = line.split(delim.as_str()).map(strip_quotes).collect();
        if fields.len() < needed {
            return Err(Error::Parse {
                path: path_str,
                line: lineno,
                message: format!("expected at least {needed} fields, found {}", fields.len()),
            });
        }
        let user = parse_field::<u64>(fields[schema.user_col], "user id", &path_str, lineno)?;
        let item = parse_field::<u64>(fields[schema.item_col], "item id", &path_str, lineno)?;
        let rating =
            parse_field::<f64>(fields[schema.rating_col], "rating", &path_str, lineno)?;
        if !rating.is_finite() {
            return Err(Error::Parse {
                path: path_str,
                line: lineno,
                message: format!("rating {rating} is not finite"),
            });
        }
        let timestamp = match schema.timestamp_col {
            Some(col) => parse_field::<i64>(fields[col], "timestamp", &path_str, lineno)?,
            None => 0,
        };
        if let Some(prev) = seen.insert((user, item), lineno) {
            return Err(Error::Parse {
                path: path_str,
                line: lineno,
                message: format!(
                    "duplicate rating for user {user} and item {item} (first on line {prev})"
                ),
            });
        }
        let mut extra = Vec::with_capacity(extra_cols.len());
        for &col in extra_cols {
            let value = parse_field::<f64>(fields[col], "covariate", &path_str, lineno)?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path_str,
                    line: lineno,
                    message: format!("covariate in column {col} is not finite"),
                });
            }
            extra.push(value);
        }
        raw.push(RawRating {
            user,
            item,
            rating,
            timestamp,
            order: raw.len(),
            line: lineno,
            extra,
        });
    }
    let raw_count = raw.len();
    if raw_count == 0 {
        return Err(Error::EmptyTable);
    }

    let mut user_counts: HashMap<u64, usize> = HashMap::new();
    let mut item_counts: HashMap<u64, usize> = HashMap::new();
    for r in &raw {
        *user_counts.entry(r.user).or_default() += 1;
        *item_counts.entry(r.item).or_default() += 1;
    }
    let kept: Vec<RawRating> = raw
        .into_iter()
        .filter(|r| {
            user_counts[&r.user] >= schema.min_user_count
                && item_counts[&r.item] >= schema.min_item_count
        })
        .collect();
    let filtered = raw_count - kept.len();
    if kept.is_empty() {
        return Err(Error::EmptyTable);
    }

    let xs: Vec<Vec<f64>> = match &schema.covariates {
        CovariateSpec::Engineered { metadata_path } => {
            let genre_codes = load_genre_codes(metadata_path)?;
            let mut scores_by_user: HashMap<u64, Vec<f64>> = HashMap::new();
            for r in &kept {
                scores_by_user.entry(r.user).or_default().push(r.rating);
            }
            let positive: HashMap<u64, f64> = scores_by_user
                .into_iter()
                .map(|(user, scores)| {
                    let flag = positive_flag(&scores, schema.positive_cutoff)?;
                    Ok((user, if flag { 1.0 } else { 0.0 }))
                })
                .collect::<Result<_>>()?;
            let pop = popularity_per_rating(&kept, schema)?;
            kept.iter()
                .zip(pop)
                .map(|(r, pop_ij)| {
                    let code = genre_codes.get(&r.item).ok_or_else(|| Error::Parse {
                        path: path_str.clone(),
                        line: r.line,
                        message: format!("item {} has no metadata entry", r.item),
                    })?;
                    Ok(vec![
                        1.0,
                        positive[&r.user],
                        code[0],
                        code[1],
                        code[2],
                        pop_ij,
                    ])
                })
                .collect::<Result<_>>()?
        }
        CovariateSpec::Columns { intercept, .. } => kept
            .iter()
            .map(|r| {
                let mut x = Vec::with_capacity(r.extra.len() + 1);
                if *intercept {
                    x.push(1.0);
                }
                x.extend_from_slice(&r.extra);
                x
            })
            .collect(),
    };

    let mut user_ids: Vec<u64> = kept.iter().map(|r| r.user).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    let mut item_ids: Vec<u64> = kept.iter().map(|r| r.item).collect();
    item_ids.sort_unstable();
    item_ids.dedup();
    let user_index: HashMap<u64, usize> =
        user_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let item_index: HashMap<u64, usize> =
        item_ids.iter().enumerate().map(|(j, &v)| (v, j)).collect();

    let p = xs[0].len();
    let cells: Vec<Cell> = kept
        .iter()
        .zip(xs)
        .map(|(r, x)| Cell {
            row: user_index[&r.user],
            col: item_index[&r.item],
            y: r.rating,
            x,
        })
        .collect();
    let table = ObservedTable::from_cells(user_ids.len(), item_ids.len(), p, cells)?
        .with_ids(user_ids, item_ids)?;
    let (rows_before, cols_before) = (table.rows(), table.cols());
    let pruned = prune_empty(&table)?;
    let report = IngestReport {
        raw: raw_count,
        filtered,
        pruned_rows: rows_before - pruned.rows(),
        pruned_cols: cols_before - pruned.cols(),
        retained: pruned.n(),
    };
    Ok((pruned, report))
}

/// Maps a set of genres to the three-dimensional category code. The four
/// categories are coded Children `(1,0,0)`, Comedy `(0,1,0)`, Drama
/// `(0,0,1)`, and Action `(-1,-1,-1)`; a multi-genre item gets the average
/// of its genres' category codes, each genre contributing an equal share.
pub fn genera_code<S: AsRef<str>>(genres: &[S]) -> Result<[f64; 3]> {
    if genres.is_empty() {
        return Err(Error::InvalidArgument(
            "genre code needs at least one genre".into(),
        ));
    }
    let share = 1.0 / genres.len() as f64;
    let mut code = [0.0; 3];
    for genre in genres {
        let genre = genre.as_ref();
        let category = category_code(genre).ok_or_else(|| {
            Error::InvalidArgument(format!("genre {genre:?} does not belong to any category"))
        })?;
        for (acc, value) in code.iter_mut().zip(category) {
            *acc += share * value;
        }
    }
    Ok(code)
}

fn category_code(genre: &str) -> Option<[f64; 3]> {
    match genre {
        "Animation" | "Children" | "Children's" => Some([1.0, 0.0, 0.0]),
        "Comedy" => Some([0.0, 1.0, 0.0]),
        "Crime" | "Documentary" | "Drama" | "Film-Noir" | "Musical" | "Mystery" | "Romance"
        | "War" | "Western" => Some([0.0, 0.0, 1.0]),
        "Action" | "Adventure" | "Fantasy" | "Horror" | "Sci-Fi" | "Thriller" => {
            Some([-1.0, -1.0, -1.0])
        }
        _ => None,
    }
}

/// Popularity of an item given that `recent_positive` of its `recent_total`
/// most recent ratings were positive: `logit((l + 0.5) / (L + 1.0))`. The
/// smoothing keeps the logit finite, and an item with no history scores 0.
pub fn popularity(recent_positive: usize, recent_total: usize) -> Result<f64> {
    if recent_positive > recent_total {
        return Err(Error::InvalidArgument(format!(
            "{recent_positive} positive ratings among only {recent_total} recent ones"
        )));
    }
    let q = (recent_positive as f64 + 0.5) / (recent_total as f64 + 1.0);
    Ok((q / (1.0 - q)).ln())
}

/// Whether strictly more than half of the scores are strictly above the
/// cutoff. Errs on an empty score list.
pub fn positive_flag(scores: &[f64], cutoff: f64) -> Result<bool> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(
            "positivity flag needs at least one score".into(),
        ));
    }
    let above = scores.iter().filter(|&&s| s > cutoff).count();
    Ok(2 * above > scores.len())
}

fn popularity_per_rating(kept: &[RawRating], schema: &RatingsSchema) -> Result<Vec<f64>> {
    let mut by_item: HashMap<u64, Vec<usize>> = HashMap::new();
    for (k, r) in kept.iter().enumerate() {
        by_item.entry(r.item).or_default().push(k);
    }
    let mut out = vec![0.0; kept.len()];
    for list in by_item.values_mut() {
        list.sort_by_key(|&k| (kept[k].timestamp, kept[k].order));
        let mut window: VecDeque<bool> = VecDeque::with_capacity(schema.recency_window);
        let mut positive = 0usize;
        for &k in list.iter() {
            let flag = kept[k].rating > schema.positive_cutoff;
            if schema.window_includes_current {
                push_flag(&mut window, &mut positive, flag, schema.recency_window);
                out[k] = popularity(positive, window.len())?;
            } else {
                out[k] = popularity(positive, window.len())?;
                push_flag(&mut window, &mut positive, flag, schema.recency_window);
            }
        }
    }
    Ok(out)
}

fn push_flag(window: &mut VecDeque<bool>, positive: &mut usize, flag: bool, cap: usize) {
    window.push_back(flag);
    if flag {
        *positive += 1;
    }
    while window.len() > cap {
        if window.pop_front() == Some(true) {
            *positive -= 1;
        }
    }
}

fn load_genre_codes(path: &Path) -> Result<HashMap<u64, [f64; 3]>> {
    let path_str = path.display().to_string();
    let lines = read_lossy_lines(path)?;
    let mut delimiter: Option<String> = None;
    let mut codes = HashMap::new();
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let delim = match &delimiter {
            Some(d) => d.clone(),
            None => {
                let d = detect_delimiter(line, &path_str, lineno)?;
                delimiter = Some(d.clone());
                d
            }
        };
        let fields: Vec<&str> = line.split(delim.as_str()).map(strip_quotes).collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: path_str,
                line: lineno,
                message: "metadata lines need an item id and a genre list".into(),
            });
        }
        let item = parse_field::<u64>(fields[0], "item id", &path_str, lineno)?;
        let genres: Vec<&str> = fields[fields.len() - 1]
            .split('|')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .collect();
        let code = genera_code(&genres).map_err(|e| Error::Parse {
            path: path_str.clone(),
            line: lineno,
            message: e.to_string(),
        })?;
        if codes.insert(item, code).is_some() {
            return Err(Error::Parse {
                path: path_str,
                line: lineno,
                message: format!("duplicate metadata entry for item {item}"),
            });
        }
    }
    if codes.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(codes)
}

fn detect_delimiter(line: &str, path: &str, lineno: usize) -> Result<String> {
    for candidate in ["::", ",", "\t"] {
        if line.contains(candidate) {
            return Ok(candidate.to_string());
        }
    }
    Err(Error::Parse {
        path: path.to_string(),
        line: lineno,
        message: "cannot detect a field delimiter (expected `::`, `,`, or a tab)".into(),
    })
}

fn strip_quotes(field: &str) -> &str {
    let field = field.trim();
    field
        .strip_prefix('"')
        .and_then(|f| f.strip_suffix('"'))
        .unwrap_or(field)
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    what: &str,
    path: &str,
    lineno: usize,
) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        line: lineno,
        message: format!("cannot parse {what} from {field:?}"),
    })
}

fn read_lossy_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path)?;
    Ok(bytes
        .split(|&b| b == b'\n')
        .map(|chunk| {
            let chunk = chunk.strip_suffix(b"\r").unwrap_or(chunk);
            String::from_utf8_lossy(chunk).into_owned()
        })
        .collect())
}

/// Writes a table as `row,col,y,x_1,...,x_p` with full-precision floats.
pub fn write_table_csv<W: Write>(table: &ObservedTable, out: &mut W) -> Result<()> {
    let mut header = String::from("row,col,y");
    for k in 1..=table.p() {
        header.push_str(&format!(",x_{k}"));
    }
    writeln!(out, "{header}")?;
    for k in 0..table.n() {
        let mut line = format!("{},{},{:.16e}", table.row_of(k), table.col_of(k), table.y(k));
        for v in table.x(k) {
            line.push_str(&format!(",{v:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads a table written by [`write_table_csv`]. Dimensions are the smallest
/// that fit the observed indices; `source` names the input in parse errors.
pub fn read_table_csv<B: BufRead>(input: B, source: &str) -> Result<ObservedTable> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: source.to_string(),
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header?;
    let names: Vec<&str> = header.trim().split(',').collect();
    if names.len() < 4 || names[0] != "row" || names[1] != "col" || names[2] != "y" {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: format!("expected header row,col,y,x_1,..., got {header:?}"),
        });
    }
    let p = names.len() - 3;
    for (k, name) in names[3..].iter().enumerate() {
        if *name != format!("x_{}", k + 1) {
            return Err(Error::Parse {
                path: source.to_string(),
                line: 1,
                message: format!("expected covariate column x_{}, got {name:?}", k + 1),
            });
        }
    }
    let mut cells = Vec::new();
    let mut rows = 0usize;
    let mut cols = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::Parse {
                path: source.to_string(),
                line: lineno,
                message: format!("expected {} fields, found {}", names.len(), fields.len()),
            });
        }
        let row = parse_field::<usize>(fields[0], "row index", source, lineno)?;
        let col = parse_field::<usize>(fields[1], "column index", source, lineno)?;
        let y = parse_field::<f64>(fields[2], "response", source, lineno)?;
        let x = fields[3..]
            .iter()
            .map(|f| parse_field::<f64>(f, "covariate", source, lineno))
            .collect::<Result<Vec<f64>>>()?;
        rows = rows.max(row + 1);
        cols = cols.max(col + 1);
        cells.push(Cell { row, col, y, x });
    }
    if cells.is_empty() {
        return Err(Error::EmptyTable);
    }
    ObservedTable::from_cells(rows, cols, p, cells)
}
