//! Multiple alignments: building them, checking their legality, scoring
//! them, and turning them back into patterns.
//!
//! An alignment arranges one incoming data pattern (row 0, New) against any
//! number of appearances of stored patterns (rows 1.., Old) so that matching
//! symbols share columns. Legal alignments obey:
//!
//! - every column holds symbols with one token, pairwise-disjoint
//!   derivations (no symbol aligned with itself, directly or transitively);
//! - each row's symbols appear in strictly increasing column order, so any
//!   two rows keep their shared columns in the same relative order and the
//!   whole arrangement projects onto a single sequence;
//! - two Old rows must not disagree inside a shared region: between
//!   consecutive columns they share — or between a shared column and the
//!   two ends — if both rows have symbols and neither side of the region
//!   contains any aligned symbol of either row, the pair is an
//!   irreconcilable mismatch and the alignment is rejected. Mismatches
//!   against the data row are tolerated: unmatched data symbols are simply
//!   left unencoded;
//! - a match between two bracket symbols is accepted only if the partner
//!   brackets that close (or open) them are matched with each other too.
//!
//! Scoring measures compression. Scanning columns left to right, the
//! *code* of an alignment is the sequence of identification symbols that
//! sit alone in their column: just enough to reconstruct the aligned
//! patterns. `b_n` is the cost of the data symbols the alignment accounts
//! for, `b_e` the cost of the code, and the compression difference
//! `cd = b_n - b_e` ranks alignments: the more data explained with the
//! less code, the better.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use crate::coding::CodeTable;
use crate::core::{Pattern, PatternId, Symbol};

/// Where a row's symbols come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSource {
    /// The incoming data pattern. Always row 0.
    New,
    /// One appearance of a stored pattern. Distinct appearances of the same
    /// pattern share symbol instances and therefore never share a column.
    Old {
        pattern: PatternId,
        appearance: u32,
    },
}

/// One row of an alignment.
#[derive(Clone, Debug)]
pub struct Row {
    pub source: RowSource,
    symbols: Vec<Symbol>,
    pub frequency: u64,
}

impl Row {
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn pattern_id(&self) -> Option<PatternId> {
        match self.source {
            RowSource::New => None,
            RowSource::Old { pattern, .. } => Some(pattern),
        }
    }
}

/// One column: at most one symbol per row, all with the same token.
#[derive(Clone, Debug)]
pub struct Column {
    cells: Vec<Option<u32>>,
}

impl Column {
    pub fn cell(&self, row: usize) -> Option<usize> {
        self.cells.get(row).copied().flatten().map(|i| i as usize)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(row, c)| c.map(|i| (row, i as usize)))
    }
}

/// Why a candidate alignment was refused.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("irreconcilable mismatch between stored rows {0} and {1}")]
    Mismatch(usize, usize),
    #[error("rows cannot be ordered into a single sequence")]
    Order,
    #[error("data symbols would leave their original order")]
    NewOrder,
    #[error("a symbol would be aligned with itself")]
    SelfMatch,
    #[error("two identifying symbols from stored rows would share a column")]
    IdCollision,
    #[error("matched brackets have unmatched partners")]
    Bracket,
    #[error("malformed combination: {0}")]
    Malformed(String),
}

/// Compression scores of one alignment.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct AlignmentScore {
    /// Cost of the data symbols the alignment accounts for.
    pub b_n: f64,
    /// Cost of the code that reconstructs the alignment.
    pub b_e: f64,
    /// Compression difference `b_n - b_e`.
    pub cd: f64,
    /// Compression ratio `b_n / b_e`.
    pub cr: f64,
}

/// A multiple alignment of the data row against stored-pattern appearances.
#[derive(Clone, Debug)]
pub struct MultipleAlignment {
    rows: Vec<Row>,
    columns: Vec<Column>,
    score: Option<AlignmentScore>,
}

/// What an alignment may be extended with.
#[derive(Clone, Copy)]
pub enum ExtendTarget<'a> {
    /// A fresh appearance of a stored pattern.
    Pattern(&'a Pattern),
    /// Another alignment (merged by way of its columns).
    Alignment(&'a MultipleAlignment),
}

impl MultipleAlignment {
    /// The trivial alignment: the data pattern alone, one column per symbol.
    pub fn from_new(new: &Pattern) -> MultipleAlignment {
        let row = Row {
            source: RowSource::New,
            symbols: new.symbols().to_vec(),
            frequency: new.frequency,
        };
        let columns = (0..new.len())
            .map(|i| Column {
                cells: vec![Some(i as u32)],
            })
            .collect();
        MultipleAlignment {
            rows: vec![row],
            columns,
            score: None,
        }
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn score(&self) -> Option<AlignmentScore> {
        self.score
    }

    /// Data-row positions whose symbols are aligned with something.
    pub fn hit_new_positions(&self) -> BTreeSet<usize> {
        let mut hit = BTreeSet::new();
        for column in &self.columns {
            if column.cell_count() >= 2 {
                if let Some(pos) = column.cell(0) {
                    hit.insert(pos);
                }
            }
        }
        hit
    }

    /// How many appearances of `pattern` the alignment contains.
    pub fn appearances_of(&self, pattern: PatternId) -> usize {
        self.rows
            .iter()
            .filter(|r| r.pattern_id() == Some(pattern))
            .count()
    }

    /// Grows `base` by unifying it with `target` at the given column pairs
    /// (`hits` pair base projection positions with target positions), then
    /// checks every legality rule.
    pub fn extend(
        base: &MultipleAlignment,
        target: ExtendTarget,
        hits: &[(usize, usize)],
    ) -> Result<MultipleAlignment, Rejection> {
        if hits.is_empty() {
            return Err(Rejection::Malformed("no hits to merge on".into()));
        }
        // ── Assemble the combined row list ──────────────────────────────
        let mut rows: Vec<Row> = base.rows.clone();
        let (target_rows, target_columns): (Vec<Row>, Vec<Column>) = match target {
            ExtendTarget::Pattern(p) => {
                let appearance = base.appearances_of(p.id) as u32;
                let row = Row {
                    source: RowSource::Old {
                        pattern: p.id,
                        appearance,
                    },
                    symbols: p.symbols().to_vec(),
                    frequency: p.frequency,
                };
                let columns = (0..p.len())
                    .map(|i| Column {
                        cells: vec![Some(i as u32)],
                    })
                    .collect();
                (vec![row], columns)
            }
            ExtendTarget::Alignment(a) => (a.rows.clone(), a.columns.clone()),
        };
        // Map target rows into the combined list. The data row is shared;
        // stored rows are renumbered as further appearances.
        let mut target_row_map = Vec::with_capacity(target_rows.len());
        for row in target_rows {
            match row.source {
                RowSource::New => {
                    if base.rows[0].symbols.len() != row.symbols.len()
                        || base.rows[0].symbols[0].id != row.symbols[0].id
                    {
                        return Err(Rejection::Malformed(
                            "alignments do not share their data row".into(),
                        ));
                    }
                    target_row_map.push(0);
                }
                RowSource::Old { pattern, .. } => {
                    let appearance = rows
                        .iter()
                        .filter(|r| r.pattern_id() == Some(pattern))
                        .count() as u32;
                    target_row_map.push(rows.len());
                    rows.push(Row {
                        source: RowSource::Old {
                            pattern,
                            appearance,
                        },
                        ..row
                    });
                }
            }
        }

        // ── Union columns: hits, plus shared data-row cells ─────────────
        let b = base.columns.len();
        let t = target_columns.len();
        let mut uf = UnionFind::new(b + t);
        for &(bc, tc) in hits {
            if bc >= b || tc >= t {
                return Err(Rejection::Malformed("hit outside column range".into()));
            }
            uf.union(bc, b + tc);
        }
        let mut new_cell_to_base = vec![usize::MAX; base.rows[0].symbols.len()];
        for (ci, column) in base.columns.iter().enumerate() {
            if let Some(pos) = column.cell(0) {
                new_cell_to_base[pos] = ci;
            }
        }
        for (ci, column) in target_columns.iter().enumerate() {
            if target_row_map.first() == Some(&0) {
                // Row 0 of the target is the shared data row.
                if let Some(pos) = column.cell(0) {
                    uf.union(new_cell_to_base[pos], b + ci);
                }
            }
        }

        // ── Gather cells per merged class and check them ────────────────
        let mut classes: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (ci, column) in base.columns.iter().enumerate() {
            let root = uf.find(ci);
            let class = classes.entry(root).or_default();
            class.extend(column.cells());
        }
        for (ci, column) in target_columns.iter().enumerate() {
            let root = uf.find(b + ci);
            let class = classes.entry(root).or_default();
            for (row, pos) in column.cells() {
                class.push((target_row_map[row], pos));
            }
        }
        for cells in classes.values_mut() {
            cells.sort();
            cells.dedup();
            let mut token: Option<&str> = None;
            let mut stored_ids = 0usize;
            for i in 0..cells.len() {
                let (row_i, pos_i) = cells[i];
                let sym_i = &rows[row_i].symbols[pos_i];
                match token {
                    None => token = Some(&sym_i.token),
                    Some(t) if t == sym_i.token => {}
                    Some(_) => {
                        return Err(Rejection::Malformed(
                            "unequal tokens unified into one column".into(),
                        ))
                    }
                }
                // A column's identification function must come from a single
                // stored row; data symbols carry no such function.
                if row_i != 0 && sym_i.role.is_id() {
                    stored_ids += 1;
                    if stored_ids > 1 {
                        return Err(Rejection::IdCollision);
                    }
                }
                for (row_j, pos_j) in cells.iter().skip(i + 1) {
                    if *row_j == row_i {
                        return Err(Rejection::Order);
                    }
                    if !sym_i.sharable_with(&rows[*row_j].symbols[*pos_j]) {
                        return Err(Rejection::SelfMatch);
                    }
                }
            }
        }

        // ── Order the merged columns ────────────────────────────────────
        let order = order_classes(&rows, &classes, target_columns.len(), hits, &uf, b)?;

        let columns: Vec<Column> = order
            .into_iter()
            .map(|root| {
                let mut cells = vec![None; rows.len()];
                for &(row, pos) in &classes[&root] {
                    cells[row] = Some(pos as u32);
                }
                Column { cells }
            })
            .collect();

        let aligned = MultipleAlignment {
            rows,
            columns,
            score: None,
        };
        aligned.validate()?;
        Ok(aligned)
    }

    /// Checks every legality rule on the finished structure.
    pub fn validate(&self) -> Result<(), Rejection> {
        // Rows in increasing column order; cells well-formed.
        let mut seen: Vec<Vec<usize>> = vec![Vec::new(); self.rows.len()];
        for column in &self.columns {
            let mut token: Option<&str> = None;
            let mut stored_ids = 0usize;
            let cells: Vec<(usize, usize)> = column.cells().collect();
            for (i, &(row, pos)) in cells.iter().enumerate() {
                let sym = &self.rows[row].symbols[pos];
                match token {
                    None => token = Some(&sym.token),
                    Some(t) if t == sym.token => {}
                    Some(_) => return Err(Rejection::Malformed("mixed-token column".into())),
                }
                if row != 0 && sym.role.is_id() {
                    stored_ids += 1;
                    if stored_ids > 1 {
                        return Err(Rejection::IdCollision);
                    }
                }
                for &(row_j, pos_j) in cells.iter().skip(i + 1) {
                    if !sym.sharable_with(&self.rows[row_j].symbols[pos_j]) {
                        return Err(Rejection::SelfMatch);
                    }
                }
                seen[row].push(pos);
            }
        }
        for (row, positions) in seen.iter().enumerate() {
            if positions.len() != self.rows[row].symbols.len() {
                return Err(Rejection::Malformed("row symbols missing a column".into()));
            }
            let ordered = positions.windows(2).all(|w| w[0] < w[1]);
            if !ordered {
                if row == 0 {
                    return Err(Rejection::NewOrder);
                }
                return Err(Rejection::Order);
            }
        }
        self.check_mismatches()?;
        self.check_brackets()?;
        Ok(())
    }

    /// The mismatch rule between every pair of stored rows.
    fn check_mismatches(&self) -> Result<(), Rejection> {
        let n = self.rows.len();
        for a in 1..n {
            for b in (a + 1)..n {
                self.check_row_pair(a, b)?;
            }
        }
        Ok(())
    }

    fn check_row_pair(&self, a: usize, b: usize) -> Result<(), Rejection> {
        let shared: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.cell(a).is_some() && c.cell(b).is_some())
            .map(|(i, _)| i)
            .collect();
        if shared.is_empty() {
            return Ok(());
        }
        let mut bounds = Vec::with_capacity(shared.len() + 1);
        bounds.push((0, shared[0]));
        for w in shared.windows(2) {
            bounds.push((w[0] + 1, w[1]));
        }
        bounds.push((shared[shared.len() - 1] + 1, self.columns.len()));
        for (start, end) in bounds {
            let mut has_a = false;
            let mut has_b = false;
            let mut anchored = false;
            for column in &self.columns[start..end] {
                let in_a = column.cell(a).is_some();
                let in_b = column.cell(b).is_some();
                has_a |= in_a;
                has_b |= in_b;
                // A symbol of either row aligned with anything reconciles
                // the region.
                if (in_a || in_b) && column.cell_count() >= 2 {
                    anchored = true;
                }
            }
            if has_a && has_b && !anchored {
                return Err(Rejection::Mismatch(a, b));
            }
        }
        Ok(())
    }

    /// Matched brackets must have their partner brackets matched too.
    fn check_brackets(&self) -> Result<(), Rejection> {
        let has_brackets = self
            .rows
            .iter()
            .any(|r| r.symbols.iter().any(|s| s.token == "<" || s.token == ">"));
        if !has_brackets {
            return Ok(());
        }
        // partner[row][pos]: position of the bracket closing/opening pos.
        let partners: Vec<BTreeMap<usize, usize>> = self
            .rows
            .iter()
            .map(|row| {
                let mut out = BTreeMap::new();
                let mut stack = Vec::new();
                for (i, sym) in row.symbols.iter().enumerate() {
                    if sym.token == "<" {
                        stack.push(i);
                    } else if sym.token == ">" {
                        if let Some(open) = stack.pop() {
                            out.insert(open, i);
                            out.insert(i, open);
                        }
                    }
                }
                out
            })
            .collect();
        let mut column_of: Vec<BTreeMap<usize, usize>> =
            vec![BTreeMap::new(); self.rows.len()];
        for (ci, column) in self.columns.iter().enumerate() {
            for (row, pos) in column.cells() {
                column_of[row].insert(pos, ci);
            }
        }
        for column in &self.columns {
            let cells: Vec<(usize, usize)> = column.cells().collect();
            if cells.len() < 2 {
                continue;
            }
            let token = &self.rows[cells[0].0].symbols[cells[0].1].token;
            if token != "<" && token != ">" {
                continue;
            }
            for i in 0..cells.len() {
                for j in (i + 1)..cells.len() {
                    let (ra, pa) = cells[i];
                    let (rb, pb) = cells[j];
                    match (partners[ra].get(&pa), partners[rb].get(&pb)) {
                        (Some(&qa), Some(&qb)) => {
                            if column_of[ra].get(&qa) != column_of[rb].get(&qb) {
                                return Err(Rejection::Bracket);
                            }
                        }
                        // A bracket with no partner in its own row cannot
                        // satisfy the pairing rule.
                        _ => return Err(Rejection::Bracket),
                    }
                }
            }
        }
        Ok(())
    }

    /// Unifies each column into one symbol, producing a pattern that can
    /// act as driving or target material in later cycles.
    pub fn project(&self) -> Pattern {
        let symbols: Vec<Symbol> = self
            .columns
            .iter()
            .map(|column| {
                let mut cells = column.cells();
                let (row, pos) = cells.next().expect("column cannot be empty");
                let mut unified = self.rows[row].symbols[pos].clone();
                for (row, pos) in cells {
                    unified = unified.unify(&self.rows[row].symbols[pos]);
                }
                unified
            })
            .collect();
        Pattern::from_symbols(symbols, 1).expect("projection of a legal alignment")
    }

    /// The code: identification symbols sitting alone in their column,
    /// left to right. An empty code is valid (a fully matched alignment
    /// costs nothing to reconstruct).
    pub fn derive_code(&self) -> Vec<Symbol> {
        let mut code = Vec::new();
        for column in &self.columns {
            let cells: Vec<(usize, usize)> = column.cells().collect();
            if let [(row, pos)] = cells[..] {
                let sym = &self.rows[row].symbols[pos];
                if sym.role.is_id() {
                    code.push(sym.clone());
                }
            }
        }
        code
    }

    /// Scores the alignment against a code table and remembers the result.
    pub fn score_with(&mut self, table: &CodeTable) -> AlignmentScore {
        let mut b_n = 0.0;
        for column in &self.columns {
            if column.cell_count() >= 2 {
                if let Some(pos) = column.cell(0) {
                    b_n += table.new_symbol_bits(&self.rows[0].symbols[pos].token);
                }
            }
        }
        let b_e: f64 = self
            .derive_code()
            .iter()
            .map(|s| table.bits(&s.token))
            .sum();
        let cd = b_n - b_e;
        let cr = if b_e > 0.0 { b_n / b_e } else { f64::INFINITY };
        let score = AlignmentScore { b_n, b_e, cd, cr };
        self.score = Some(score);
        score
    }

    /// Removes the given stored rows (used when a row adds nothing that
    /// another row does not already supply). Columns left empty vanish.
    pub fn without_rows(&self, drop: &BTreeSet<usize>) -> MultipleAlignment {
        let keep: Vec<usize> = (0..self.rows.len()).filter(|r| !drop.contains(r)).collect();
        let rows: Vec<Row> = keep.iter().map(|&r| self.rows[r].clone()).collect();
        let columns: Vec<Column> = self
            .columns
            .iter()
            .filter_map(|column| {
                let cells: Vec<Option<u32>> = keep
                    .iter()
                    .map(|&r| column.cells[r])
                    .collect();
                if cells.iter().any(|c| c.is_some()) {
                    Some(Column { cells })
                } else {
                    None
                }
            })
            .collect();
        MultipleAlignment {
            rows,
            columns,
            score: None,
        }
    }

    /// Appends fresh data symbols as trailing unmatched columns (used when
    /// a window boundary extends the visible data).
    pub fn rebase_data_row(&self, longer_new: &Pattern) -> MultipleAlignment {
        let old_len = self.rows[0].symbols.len();
        debug_assert!(longer_new.len() >= old_len);
        let mut rows = self.rows.clone();
        rows[0].symbols = longer_new.symbols().to_vec();
        let mut columns = self.columns.clone();
        for pos in old_len..longer_new.len() {
            let mut cells = vec![None; rows.len()];
            cells[0] = Some(pos as u32);
            columns.push(Column { cells });
        }
        MultipleAlignment {
            rows,
            columns,
            score: None,
        }
    }

    /// A key that identifies the alignment by its column partition alone.
    ///
    /// The same logical alignment can be assembled along different routes,
    /// leaving the rows and columns stored in different orders; duplicate
    /// detection must see through that. Rows are renumbered by their
    /// pattern and by the content of the columns they occupy, and the
    /// columns are serialised as a sorted set, so any two alignments that
    /// group the same symbol instances into the same columns get the same
    /// key.
    pub fn canonical_key(&self) -> String {
        // Content signature of each column: its token plus the multiset of
        // (source, pattern, symbol position) of its cells. Independent of
        // the order rows or columns happen to be stored in.
        let col_sig: Vec<String> = self
            .columns
            .iter()
            .map(|column| {
                let mut cells: Vec<(u8, PatternId, usize)> = column
                    .cells()
                    .map(|(row, pos)| match self.rows[row].source {
                        RowSource::New => (0, 0, pos),
                        RowSource::Old { pattern, .. } => (1, pattern, pos),
                    })
                    .collect();
                cells.sort_unstable();
                let token = column
                    .cells()
                    .next()
                    .map(|(row, pos)| self.rows[row].symbols[pos].token.as_str())
                    .unwrap_or("");
                format!("{token}:{cells:?}")
            })
            .collect();
        // Canonical row order: the data row, then stored rows by pattern
        // and by the signatures of the columns their symbols sit in, read
        // along the row. Appearance numbers are deliberately ignored; they
        // record build order, not structure.
        let row_sig = |r: usize| -> (u8, PatternId, Vec<&str>) {
            let (kind, pid) = match self.rows[r].source {
                RowSource::New => (0, 0),
                RowSource::Old { pattern, .. } => (1, pattern),
            };
            let mut cols: Vec<(usize, &str)> = self
                .columns
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.cell(r).map(|pos| (pos, col_sig[i].as_str())))
                .collect();
            cols.sort_unstable();
            (kind, pid, cols.into_iter().map(|(_, sig)| sig).collect())
        };
        let mut order: Vec<usize> = (0..self.rows.len()).collect();
        order.sort_by(|&a, &b| row_sig(a).cmp(&row_sig(b)));
        let rank: BTreeMap<usize, usize> = order
            .iter()
            .enumerate()
            .map(|(rank, &row)| (row, rank))
            .collect();
        let mut key = String::new();
        for &row in &order {
            match self.rows[row].source {
                RowSource::New => key.push_str("N;"),
                RowSource::Old { pattern, .. } => {
                    let _ = write!(key, "P{pattern};");
                }
            }
        }
        let mut cols: Vec<String> = self
            .columns
            .iter()
            .map(|column| {
                let mut cells: Vec<(usize, usize)> = column
                    .cells()
                    .map(|(row, pos)| (rank[&row], pos))
                    .collect();
                cells.sort_unstable();
                let mut piece = String::from("[");
                for (rank, pos) in cells {
                    let _ = write!(piece, "{rank}.{pos},");
                }
                piece.push(']');
                piece
            })
            .collect();
        cols.sort_unstable();
        for piece in cols {
            key.push_str(&piece);
        }
        key
    }

    /// Book-style rendering: one line per row, vertical bars connecting
    /// the symbols of each column, row numbers at both margins.
    pub fn render_text(&self) -> String {
        let n_rows = self.rows.len();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .map(|c| {
                c.cells()
                    .map(|(row, pos)| self.rows[row].symbols[pos].token.len())
                    .max()
                    .unwrap_or(1)
            })
            .collect();
        let spans: Vec<(usize, usize)> = self
            .columns
            .iter()
            .map(|c| {
                let rows: Vec<usize> = c.cells().map(|(row, _)| row).collect();
                (
                    rows.iter().copied().min().unwrap_or(0),
                    rows.iter().copied().max().unwrap_or(0),
                )
            })
            .collect();
        let label_width = (n_rows - 1).to_string().len();
        let mut out = String::new();
        for row in 0..n_rows {
            let mut line = format!("{row:<label_width$} ");
            for (ci, column) in self.columns.iter().enumerate() {
                let w = widths[ci];
                let piece = match column.cell(row) {
                    Some(pos) => {
                        let token = &self.rows[row].symbols[pos].token;
                        format!("{token:<w$}")
                    }
                    None if spans[ci].0 < row && row < spans[ci].1 => {
                        format!("{:<w$}", "|")
                    }
                    None => " ".repeat(w),
                };
                line.push_str(&piece);
                line.push(' ');
            }
            while line.ends_with(' ') {
                line.pop();
            }
            let _ = writeln!(out, "{line} {row}");
            if row + 1 < n_rows {
                let mut bars = format!("{:<label_width$} ", "");
                for (ci, _) in self.columns.iter().enumerate() {
                    let w = widths[ci];
                    let connected = spans[ci].0 <= row && spans[ci].1 >= row + 1;
                    if connected {
                        bars.push_str(&format!("{:<w$}", "|"));
                    } else {
                        bars.push_str(&" ".repeat(w));
                    }
                    bars.push(' ');
                }
                while bars.ends_with(' ') {
                    bars.pop();
                }
                if !bars.trim().is_empty() {
                    let _ = writeln!(out, "{bars}");
                } else {
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Structured rendering. Schema:
    ///
    /// ```json
    /// {
    ///   "rows": [{"kind": "new"|"old", "pattern": id|null,
    ///             "appearance": n, "frequency": n, "tokens": [..]}],
    ///   "columns": [{"token": t, "cells": [{"row": r, "pos": p}]}],
    ///   "score": {"b_n":, "b_e":, "cd":, "cr":} | null,
    ///   "code": ["token", ..]
    /// }
    /// ```
    pub fn render_json(&self) -> serde_json::Value {
        use serde_json::json;
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let (kind, pattern, appearance) = match row.source {
                    RowSource::New => ("new", None, 0),
                    RowSource::Old {
                        pattern,
                        appearance,
                    } => ("old", Some(pattern), appearance),
                };
                json!({
                    "kind": kind,
                    "pattern": pattern,
                    "appearance": appearance,
                    "frequency": row.frequency,
                    "tokens": row.symbols.iter().map(|s| s.token.clone()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let columns: Vec<serde_json::Value> = self
            .columns
            .iter()
            .map(|column| {
                let cells: Vec<serde_json::Value> = column
                    .cells()
                    .map(|(row, pos)| json!({"row": row, "pos": pos}))
                    .collect();
                let (row, pos) = column.cells().next().expect("column cannot be empty");
                json!({
                    "token": self.rows[row].symbols[pos].token,
                    "cells": cells,
                })
            })
            .collect();
        let score = self.score.map(|s| json!(s));
        let code: Vec<String> = self.derive_code().iter().map(|s| s.token.clone()).collect();
        json!({
            "rows": rows,
            "columns": columns,
            "score": score,
            "code": code,
        })
    }
}

/// Keeps the first of any alignments that coincide up to row order.
pub fn dedupe(alignments: Vec<MultipleAlignment>) -> Vec<MultipleAlignment> {
    let mut seen = BTreeSet::new();
    alignments
        .into_iter()
        .filter(|a| seen.insert(a.canonical_key()))
        .collect()
}

// ── Column ordering ─────────────────────────────────────────────────────

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
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
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb.max(ra)] = rb.min(ra);
        }
    }
}

/// Topologically orders the merged column classes. Each row's symbols give
/// precedence edges. Between anchored columns, free base columns come
/// first; after the last anchored column the target's remainder comes
/// first, so chained tails stay matchable in projection order.
fn order_classes(
    rows: &[Row],
    classes: &BTreeMap<usize, Vec<(usize, usize)>>,
    target_len: usize,
    hits: &[(usize, usize)],
    uf: &UnionFind,
    b: usize,
) -> Result<Vec<usize>, Rejection> {
    let mut uf = UnionFind {
        parent: uf.parent.clone(),
    };
    // Rank keys implementing the interleaving convention.
    let last_anchor_base = hits.iter().map(|&(bc, _)| bc).max().unwrap_or(0);
    let mut key: BTreeMap<usize, (u8, usize)> = BTreeMap::new();
    for tc in 0..target_len {
        let root = uf.find(b + tc);
        key.entry(root).or_insert((1, tc));
    }
    for bc in (0..b).rev() {
        let root = uf.find(bc);
        let side = if bc > last_anchor_base { 2 } else { 0 };
        key.insert(root, (side, bc));
    }
    // Precedence edges from row order.
    let mut col_of_cell: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&root, cells) in classes {
        for &(row, pos) in cells {
            col_of_cell.insert((row, pos), root);
        }
    }
    let mut succ: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut indegree: BTreeMap<usize, usize> = classes.keys().map(|&r| (r, 0)).collect();
    for (row_idx, row) in rows.iter().enumerate() {
        for pos in 1..row.symbols.len() {
            let (Some(&a), Some(&c)) = (
                col_of_cell.get(&(row_idx, pos - 1)),
                col_of_cell.get(&(row_idx, pos)),
            ) else {
                return Err(Rejection::Malformed("cell missing from classes".into()));
            };
            if a == c {
                return Err(if row_idx == 0 {
                    Rejection::NewOrder
                } else {
                    Rejection::Order
                });
            }
            succ.entry(a).or_default().push(c);
            *indegree.get_mut(&c).unwrap() += 1;
        }
    }
    let mut ready: BinaryHeap<std::cmp::Reverse<((u8, usize), usize)>> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&root, _)| std::cmp::Reverse((key[&root], root)))
        .collect();
    let mut order = Vec::with_capacity(classes.len());
    while let Some(std::cmp::Reverse((_, root))) = ready.pop() {
        order.push(root);
        if let Some(nexts) = succ.get(&root) {
            for &n in nexts {
                let d = indegree.get_mut(&n).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(std::cmp::Reverse((key[&n], n)));
                }
            }
        }
    }
    if order.len() != classes.len() {
        // A cycle: the rows cannot be laid out in one sequence. Blame the
        // data row when its cells are entangled in the conflict.
        let involves_new = classes
            .iter()
            .filter(|(root, _)| !order.contains(root))
            .any(|(_, cells)| cells.iter().any(|&(row, _)| row == 0));
        return Err(if involves_new {
            Rejection::NewOrder
        } else {
            Rejection::Order
        });
    }
    Ok(order)
}
