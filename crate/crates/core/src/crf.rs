//! Chinese Restaurant Franchise seating for a single HDP.
//!
//! Customers are registered up front with their values and carry a stable
//! id. Restaurants are addressed by caller-chosen ids so that a seating can
//! use groups (space) or live dish ids of another seating (time, speed) as
//! restaurants. Tables and dishes live in slabs and are removed as soon as
//! they empty.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyper::Concentration;
use crate::slab::Slab;
use crate::stats::{dirichlet, Conjugate, DishParams, Reporting};
use crate::util::{ln_sum_exp, sample_ln};

pub type CustomerId = usize;
pub type RestaurantId = usize;
pub type TableId = usize;
pub type DishId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seat {
    pub restaurant: RestaurantId,
    pub table: TableId,
    slot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Customer<V> {
    value: V,
    seat: Option<Seat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// `None` only while the table is detached for dish resampling.
    dish: Option<DishId>,
    members: Vec<CustomerId>,
}

impl Table {
    pub fn dish(&self) -> Option<DishId> {
        self.dish
    }

    pub fn members(&self) -> &[CustomerId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Restaurant {
    tables: Slab<Table>,
    customers: usize,
}

impl Restaurant {
    pub fn tables(&self) -> impl Iterator<Item = (TableId, &Table)> {
        self.tables.iter()
    }

    pub fn table(&self, t: TableId) -> Option<&Table> {
        self.tables.get(t)
    }

    pub fn n_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn n_customers(&self) -> usize {
        self.customers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dish<S> {
    stats: S,
    tables: usize,
}

impl<S> Dish<S> {
    pub fn stats(&self) -> &S {
        &self.stats
    }

    /// Number of tables serving this dish across all restaurants.
    pub fn n_tables(&self) -> usize {
        self.tables
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DishChoice {
    Existing(DishId),
    New,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableChoice {
    Existing(TableId),
    New(DishChoice),
}

/// Dish candidates with log weights; the last weight is the new dish.
#[derive(Debug, Clone, PartialEq)]
pub struct DishCandidates {
    pub dishes: Vec<DishId>,
    pub ln_weights: Vec<f64>,
}

impl DishCandidates {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DishChoice> {
        let i = sample_ln(&self.ln_weights, rng)?;
        Ok(self.dishes.get(i).map_or(DishChoice::New, |&k| DishChoice::Existing(k)))
    }
}

/// Table candidates of one restaurant; the last weight is the new table,
/// whose dish is then drawn from `new_table_dishes`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCandidates {
    pub tables: Vec<TableId>,
    pub ln_weights: Vec<f64>,
    pub new_table_dishes: DishCandidates,
}

impl TableCandidates {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TableChoice> {
        let i = sample_ln(&self.ln_weights, rng)?;
        match self.tables.get(i) {
            Some(&t) => Ok(TableChoice::Existing(t)),
            None => Ok(TableChoice::New(self.new_table_dishes.sample(rng)?)),
        }
    }
}

fn ln(x: f64) -> f64 {
    x.ln()
}

/// Log of the new-table likelihood `(Σ_k m_k f_k + γ f_0) / (M + γ)` given
/// the dish candidates' log weights.
fn ln_menu(dishes: &DishCandidates, total_tables: usize, gamma: f64) -> f64 {
    let denom = total_tables as f64 + gamma;
    if denom <= 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_sum_exp(&dishes.ln_weights) - denom.ln()
}

/// Dish likelihoods of one value plus its global-menu mixture.
pub struct Preference<'a> {
    ln_lik: &'a [f64],
    ln_menu: f64,
    shift: f64,
    /// `exp(ln_lik - shift)` by dish slot.
    rel: Vec<f64>,
}

impl Preference<'_> {
    pub fn ln_menu(&self) -> f64 {
        self.ln_menu
    }

    /// `ln [Σ_t n_t lik_{k_t} + α menu] - ln (n + α)` for restaurant `r`;
    /// the menu alone when `r` is missing or empty.
    pub fn ln_at<S: Conjugate>(&self, seating: &HdpSeating<S>, r: Option<RestaurantId>, alpha: f64) -> f64 {
        let rest = match r.and_then(|r| seating.restaurant(r)) {
            Some(rest) if rest.customers > 0 => rest,
            _ => return self.ln_menu,
        };
        let denom = ln(rest.customers as f64 + alpha);
        if !self.rel.is_empty() {
            let mut acc = alpha * (self.ln_menu - self.shift).exp();
            for (_, tab) in rest.tables.iter() {
                acc += tab.members.len() as f64 * self.rel[tab.dish.expect("attached table")];
            }
            if acc > 1e-250 {
                return acc.ln() + self.shift - denom;
            }
        }
        let mut terms: Vec<f64> = rest
            .tables
            .iter()
            .map(|(_, tab)| ln(tab.members.len() as f64) + self.ln_lik[tab.dish.expect("attached table")])
            .collect();
        terms.push(ln(alpha) + self.ln_menu);
        ln_sum_exp(&terms) - denom
    }
}

/// Full-recount summary returned by [`HdpSeating::check_consistency`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeatingCounts {
    pub customers: usize,
    pub tables: usize,
    pub dishes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize, S::Value: Serialize",
    deserialize = "S: Deserialize<'de>, S::Value: Deserialize<'de>"
))]
pub struct HdpSeating<S: Conjugate> {
    base: S,
    customers: Vec<Customer<S::Value>>,
    restaurants: Vec<Option<Restaurant>>,
    dishes: Slab<Dish<S>>,
}

impl<S: Conjugate> HdpSeating<S> {
    /// Registers `values` as unseated customers `0..values.len()`.
    pub fn new(base: S, values: Vec<S::Value>) -> Self {
        let base = base.empty_like();
        Self {
            base,
            customers: values.into_iter().map(|value| Customer { value, seat: None }).collect(),
            restaurants: Vec::new(),
            dishes: Slab::new(),
        }
    }

    pub fn base(&self) -> &S {
        &self.base
    }

    pub fn n_customers(&self) -> usize {
        self.customers.len()
    }

    pub fn n_seated(&self) -> usize {
        self.restaurants.iter().flatten().map(|r| r.customers).sum()
    }

    pub fn value(&self, c: CustomerId) -> S::Value {
        self.customers[c].value
    }

    pub fn seat_of(&self, c: CustomerId) -> Option<Seat> {
        self.customers[c].seat
    }

    pub fn dish_of(&self, c: CustomerId) -> Option<DishId> {
        let s = self.customers[c].seat?;
        self.restaurants[s.restaurant].as_ref()?.tables.get(s.table)?.dish
    }

    pub fn restaurant(&self, r: RestaurantId) -> Option<&Restaurant> {
        self.restaurants.get(r)?.as_ref()
    }

    pub fn restaurant_ids(&self) -> Vec<RestaurantId> {
        self.restaurants.iter().enumerate().filter(|(_, r)| r.is_some()).map(|(i, _)| i).collect()
    }

    pub fn n_restaurants(&self) -> usize {
        self.restaurants.iter().flatten().count()
    }

    pub fn open_restaurant(&mut self, r: RestaurantId) {
        if self.restaurants.len() <= r {
            self.restaurants.resize_with(r + 1, || None);
        }
        if self.restaurants[r].is_none() {
            self.restaurants[r] = Some(Restaurant::default());
        }
    }

    /// Removes an empty restaurant.
    pub fn close_restaurant(&mut self, r: RestaurantId) -> Result<()> {
        match self.restaurants.get(r) {
            Some(Some(rest)) if rest.customers > 0 => Err(Error::consistency(format!(
                "closing restaurant {r} with {} customers",
                rest.customers
            ))),
            Some(Some(_)) => {
                self.restaurants[r] = None;
                Ok(())
            }
            _ => Err(Error::consistency(format!("closing unknown restaurant {r}"))),
        }
    }

    pub fn dish(&self, k: DishId) -> Option<&Dish<S>> {
        self.dishes.get(k)
    }

    pub fn dish_ids(&self) -> Vec<DishId> {
        self.dishes.ids()
    }

    pub fn dishes(&self) -> impl Iterator<Item = (DishId, &Dish<S>)> {
        self.dishes.iter()
    }

    pub fn n_dishes(&self) -> usize {
        self.dishes.len()
    }

    pub fn dish_capacity(&self) -> usize {
        self.dishes.capacity()
    }

    pub fn n_tables(&self) -> usize {
        self.dishes.iter().map(|(_, d)| d.tables).sum()
    }

    /// `(customers, tables)` of every live restaurant.
    pub fn group_counts(&self) -> Vec<(usize, usize)> {
        self.restaurants.iter().flatten().map(|r| (r.customers, r.tables.len())).collect()
    }

    /// Customers per dish inside restaurant `r`, by dish slot.
    pub fn restaurant_dish_customers(&self, r: RestaurantId) -> Vec<usize> {
        let mut v = vec![0; self.dishes.capacity()];
        if let Some(rest) = self.restaurant(r) {
            for (_, t) in rest.tables.iter() {
                if let Some(k) = t.dish {
                    v[k] += t.members.len();
                }
            }
        }
        v
    }

    // -----------------------------------------------------------------------
    // Seating primitives

    /// Removes customer `c` from its table; returns the dish id if the dish
    /// lost its last table.
    pub fn unseat(&mut self, c: CustomerId) -> Option<DishId> {
        let seat = self.customers[c].seat.take()?;
        let value = self.customers[c].value;
        let rest = self.restaurants[seat.restaurant].as_mut().expect("seated in a live restaurant");
        rest.customers -= 1;
        let table = rest.tables.get_mut(seat.table).expect("seated at a live table");
        table.members.swap_remove(seat.slot);
        if let Some(&moved) = table.members.get(seat.slot) {
            self.customers[moved].seat.as_mut().expect("member is seated").slot = seat.slot;
        }
        let dish = table.dish;
        let emptied = table.members.is_empty();
        if emptied {
            rest.tables.remove(seat.table);
        }
        let k = dish?;
        let d = self.dishes.get_mut(k).expect("table serves a live dish");
        d.stats.forget(value);
        if emptied {
            d.tables -= 1;
            if d.tables == 0 {
                self.dishes.remove(k);
                return Some(k);
            }
        }
        None
    }

    fn open_dish(&mut self) -> DishId {
        let stats = self.base.empty_like();
        self.dishes.insert(Dish { stats, tables: 0 })
    }

    fn resolve_dish(&mut self, choice: DishChoice) -> (DishId, bool) {
        match choice {
            DishChoice::Existing(k) => (k, false),
            DishChoice::New => (self.open_dish(), true),
        }
    }

    fn push_member(&mut self, c: CustomerId, r: RestaurantId, t: TableId) {
        let rest = self.restaurants[r].as_mut().expect("live restaurant");
        rest.customers += 1;
        let table = rest.tables.get_mut(t).expect("live table");
        let slot = table.members.len();
        table.members.push(c);
        let dish = table.dish;
        self.customers[c].seat = Some(Seat { restaurant: r, table: t, slot });
        if let Some(k) = dish {
            let v = self.customers[c].value;
            self.dishes.get_mut(k).expect("live dish").stats.observe(v);
        }
    }

    /// Seats an unseated customer; returns `(table, dish, dish_is_new)`.
    pub fn seat(&mut self, c: CustomerId, r: RestaurantId, choice: TableChoice) -> (TableId, DishId, bool) {
        assert!(self.customers[c].seat.is_none(), "customer {c} is already seated");
        self.open_restaurant(r);
        match choice {
            TableChoice::Existing(t) => {
                self.push_member(c, r, t);
                let k = self.restaurants[r].as_ref().unwrap().tables.get(t).unwrap().dish.expect("attached");
                (t, k, false)
            }
            TableChoice::New(dc) => {
                let (k, fresh) = self.resolve_dish(dc);
                self.dishes.get_mut(k).expect("live dish").tables += 1;
                let t = self.restaurants[r]
                    .as_mut()
                    .unwrap()
                    .tables
                    .insert(Table { dish: Some(k), members: Vec::new() });
                self.push_member(c, r, t);
                (t, k, fresh)
            }
        }
    }

    /// Takes table `t` off its dish, removing its customers from the dish
    /// statistics. Returns the dish id if it died.
    pub fn detach_table(&mut self, r: RestaurantId, t: TableId) -> Option<DishId> {
        let rest = self.restaurants[r].as_mut().expect("live restaurant");
        let table = rest.tables.get_mut(t).expect("live table");
        let k = table.dish.take()?;
        let d = self.dishes.get_mut(k).expect("live dish");
        for &c in &table.members {
            d.stats.forget(self.customers[c].value);
        }
        d.tables -= 1;
        if d.tables == 0 {
            self.dishes.remove(k);
            return Some(k);
        }
        None
    }

    /// Puts a detached table on a dish; returns `(dish, dish_is_new)`.
    pub fn attach_table(&mut self, r: RestaurantId, t: TableId, choice: DishChoice) -> (DishId, bool) {
        let (k, fresh) = self.resolve_dish(choice);
        let table = self.restaurants[r].as_mut().expect("live restaurant").tables.get_mut(t).expect("live table");
        assert!(table.dish.is_none(), "attaching a table that already has a dish");
        table.dish = Some(k);
        let d = self.dishes.get_mut(k).expect("live dish");
        d.tables += 1;
        for &c in &table.members {
            d.stats.observe(self.customers[c].value);
        }
        (k, fresh)
    }

    /// Values of the customers at a table, in seating order.
    pub fn table_values(&self, r: RestaurantId, t: TableId) -> Vec<S::Value> {
        self.restaurant(r)
            .and_then(|rest| rest.table(t))
            .map(|tab| tab.members.iter().map(|&c| self.customers[c].value).collect())
            .unwrap_or_default()
    }

    // -----------------------------------------------------------------------
    // Weights

    /// `ln f_k(x)` for every dish slot; `-inf` on empty slots.
    pub fn ln_predictive_by_dish(&self, x: S::Value) -> Vec<f64> {
        let mut v = vec![f64::NEG_INFINITY; self.dishes.capacity()];
        for (k, d) in self.dishes.iter() {
            v[k] = d.stats.ln_predictive(x);
        }
        v
    }

    /// `ln f_0(x)` under the base measure.
    pub fn ln_prior_predictive(&self, x: S::Value) -> f64 {
        self.base.ln_predictive(x)
    }

    /// Existing dish `k` weighted `m_k · lik_k`, a new dish `γ · lik_0`.
    /// `ln_lik` is indexed by dish slot.
    pub fn dish_candidates(&self, ln_lik: &[f64], ln_lik_new: f64, gamma: f64) -> DishCandidates {
        let mut dishes = Vec::with_capacity(self.dishes.len());
        let mut ln_weights = Vec::with_capacity(self.dishes.len() + 1);
        for (k, d) in self.dishes.iter() {
            dishes.push(k);
            ln_weights.push(ln(d.tables as f64) + ln_lik[k]);
        }
        ln_weights.push(ln(gamma) + ln_lik_new);
        DishCandidates { dishes, ln_weights }
    }

    /// Existing table `t` weighted `n_t · lik_{k_t}`, a new table
    /// `α · (Σ_k m_k lik_k + γ lik_0) / (M + γ)`.
    pub fn table_candidates(
        &self,
        r: RestaurantId,
        ln_lik: &[f64],
        ln_lik_new: f64,
        alpha: f64,
        gamma: f64,
    ) -> TableCandidates {
        let new_table_dishes = self.dish_candidates(ln_lik, ln_lik_new, gamma);
        let mut tables = Vec::new();
        let mut ln_weights = Vec::new();
        if let Some(rest) = self.restaurant(r) {
            for (t, tab) in rest.tables.iter() {
                let k = tab.dish.expect("attached table");
                tables.push(t);
                ln_weights.push(ln(tab.members.len() as f64) + ln_lik[k]);
            }
        }
        ln_weights.push(ln(alpha) + ln_menu(&new_table_dishes, self.n_tables(), gamma));
        TableCandidates { tables, ln_weights, new_table_dishes }
    }

    /// Predictive density of a new customer with dish log-likelihoods
    /// `ln_lik` joining restaurant `r`, marginalized over its tables and the
    /// new-table branch. A missing or empty restaurant gives the global menu
    /// mixture.
    pub fn ln_restaurant_preference(
        &self,
        r: Option<RestaurantId>,
        ln_lik: &[f64],
        ln_lik_new: f64,
        alpha: f64,
        gamma: f64,
    ) -> f64 {
        self.preference(ln_lik, ln_lik_new, gamma).ln_at(self, r, alpha)
    }

    /// Restaurant-independent part of [`ln_restaurant_preference`](Self::ln_restaurant_preference),
    /// to be shared across many candidate restaurants.
    pub fn preference<'a>(&self, ln_lik: &'a [f64], ln_lik_new: f64, gamma: f64) -> Preference<'a> {
        let ln_menu = ln_menu(&self.dish_candidates(ln_lik, ln_lik_new, gamma), self.n_tables(), gamma);
        let shift = ln_lik.iter().copied().fold(ln_menu, f64::max);
        let rel = if shift.is_finite() { ln_lik.iter().map(|&l| (l - shift).exp()).collect() } else { Vec::new() };
        Preference { ln_lik, ln_menu, shift, rel }
    }

    // -----------------------------------------------------------------------
    // Gibbs steps

    /// Resamples the table of a seated customer within its restaurant.
    pub fn resample_customer<R: Rng + ?Sized>(
        &mut self,
        c: CustomerId,
        alpha: f64,
        gamma: f64,
        rng: &mut R,
    ) -> Result<()> {
        let Some(seat) = self.customers[c].seat else { return Ok(()) };
        self.unseat(c);
        let x = self.customers[c].value;
        let ln_f = self.ln_predictive_by_dish(x);
        let cands = self.table_candidates(seat.restaurant, &ln_f, self.ln_prior_predictive(x), alpha, gamma);
        let choice = cands.sample(rng)?;
        self.seat(c, seat.restaurant, choice);
        Ok(())
    }

    /// Resamples the dish of a whole table from the joint predictive of its
    /// customers.
    pub fn resample_table_dish<R: Rng + ?Sized>(
        &mut self,
        r: RestaurantId,
        t: TableId,
        gamma: f64,
        rng: &mut R,
    ) -> Result<()> {
        let xs = self.table_values(r, t);
        self.detach_table(r, t);
        let mut ln_joint = vec![f64::NEG_INFINITY; self.dishes.capacity()];
        for (k, d) in self.dishes.iter() {
            ln_joint[k] = d.stats.ln_joint_predictive(&xs);
        }
        let cands = self.dish_candidates(&ln_joint, self.base.ln_joint_predictive(&xs), gamma);
        let choice = cands.sample(rng)?;
        self.attach_table(r, t, choice);
        Ok(())
    }

    /// One pass over every seated customer, then every table.
    pub fn crf_pass<R: Rng + ?Sized>(&mut self, alpha: f64, gamma: f64, rng: &mut R) -> Result<()> {
        for c in 0..self.customers.len() {
            self.resample_customer(c, alpha, gamma, rng)?;
        }
        for r in 0..self.restaurants.len() {
            let Some(rest) = &self.restaurants[r] else { continue };
            for t in rest.tables.ids() {
                self.resample_table_dish(r, t, gamma, rng)?;
            }
        }
        Ok(())
    }

    /// [`crf_pass`](Self::crf_pass) followed by concentration resampling.
    pub fn crf_sweep<R: Rng + ?Sized>(
        &mut self,
        alpha: &mut Concentration,
        gamma: &mut Concentration,
        rng: &mut R,
    ) -> Result<()> {
        self.crf_pass(alpha.value, gamma.value, rng)?;
        self.resample_concentrations(alpha, gamma, rng);
        Ok(())
    }

    pub fn resample_concentrations<R: Rng + ?Sized>(
        &self,
        alpha: &mut Concentration,
        gamma: &mut Concentration,
        rng: &mut R,
    ) {
        gamma.resample_top(self.n_dishes(), self.n_tables(), rng);
        alpha.resample_groups(&self.group_counts(), rng);
    }

    /// Seats every listed customer at one table per restaurant, all tables
    /// sharing a single dish.
    pub fn init_single_dish(&mut self, assignments: &[(CustomerId, RestaurantId)]) {
        if assignments.is_empty() {
            return;
        }
        let k = self.open_dish();
        let mut table_of: Vec<Option<TableId>> = Vec::new();
        for &(c, r) in assignments {
            if table_of.len() <= r {
                table_of.resize(r + 1, None);
            }
            let choice = match table_of[r] {
                Some(t) => TableChoice::Existing(t),
                None => TableChoice::New(DishChoice::Existing(k)),
            };
            let (t, _, _) = self.seat(c, r, choice);
            table_of[r] = Some(t);
        }
    }

    /// Sum of the log marginal likelihoods of all dishes.
    pub fn ln_likelihood(&self) -> f64 {
        self.dishes.iter().map(|(_, d)| d.stats.ln_marginal()).sum()
    }

    /// Full recount of every count and sufficient statistic.
    pub fn check_consistency(&self) -> Result<SeatingCounts> {
        let mut stats: Vec<Option<S>> = vec![None; self.dishes.capacity()];
        let mut tables_per_dish = vec![0usize; self.dishes.capacity()];
        let mut seen = vec![false; self.customers.len()];
        let mut n_tables = 0;
        for (r, rest) in self.restaurants.iter().enumerate() {
            let Some(rest) = rest else { continue };
            let mut n = 0;
            for (t, tab) in rest.tables.iter() {
                if tab.members.is_empty() {
                    return Err(Error::consistency(format!("empty table {t} in restaurant {r}")));
                }
                let k = tab.dish.ok_or_else(|| Error::consistency(format!("table {t} in restaurant {r} has no dish")))?;
                if !self.dishes.contains(k) {
                    return Err(Error::consistency(format!("table {t} serves dead dish {k}")));
                }
                n_tables += 1;
                tables_per_dish[k] += 1;
                let st = stats[k].get_or_insert_with(|| self.base.empty_like());
                for (slot, &c) in tab.members.iter().enumerate() {
                    let expect = Seat { restaurant: r, table: t, slot };
                    if self.customers.get(c).and_then(|x| x.seat) != Some(expect) {
                        return Err(Error::consistency(format!("customer {c} seat does not match table {t}")));
                    }
                    if std::mem::replace(&mut seen[c], true) {
                        return Err(Error::consistency(format!("customer {c} seated twice")));
                    }
                    st.observe(self.customers[c].value);
                    n += 1;
                }
            }
            if n != rest.customers {
                return Err(Error::consistency(format!(
                    "restaurant {r} counts {} customers, tables hold {n}",
                    rest.customers
                )));
            }
        }
        for (c, cust) in self.customers.iter().enumerate() {
            if cust.seat.is_some() && !seen[c] {
                return Err(Error::consistency(format!("customer {c} claims a seat it does not hold")));
            }
        }
        for (k, d) in self.dishes.iter() {
            if d.tables == 0 || d.tables != tables_per_dish[k] {
                return Err(Error::consistency(format!(
                    "dish {k} records {} tables, recount gives {}",
                    d.tables, tables_per_dish[k]
                )));
            }
            if stats[k].as_ref() != Some(&d.stats) {
                return Err(Error::consistency(format!("dish {k} statistics differ from recount")));
            }
        }
        Ok(SeatingCounts { customers: seen.iter().filter(|&&s| s).count(), tables: n_tables, dishes: self.dishes.len() })
    }
}

/// Mixture weights and dish parameters read off a seating.
#[derive(Debug, Clone, PartialEq)]
pub struct HdpPosterior<P> {
    pub dish_ids: Vec<DishId>,
    /// Normalized over the live dishes.
    pub weights: Vec<f64>,
    /// Mass assigned to an unseen dish before renormalization.
    pub unseen_weight: f64,
    pub params: Vec<P>,
}

impl<S: DishParams> HdpSeating<S> {
    /// `β ~ Dirichlet(m_1, …, m_K, γ)` (or its mean) with per-dish parameters.
    pub fn extract_posterior<R: Rng + ?Sized>(
        &self,
        gamma: f64,
        mode: Reporting,
        rng: &mut R,
    ) -> HdpPosterior<S::Params> {
        let dish_ids = self.dishes.ids();
        let mut alphas: Vec<f64> = self.dishes.iter().map(|(_, d)| d.tables as f64).collect();
        alphas.push(gamma);
        let mut w = dirichlet(&alphas, mode, rng);
        let unseen_weight = w.pop().unwrap_or(1.0);
        let seen: f64 = w.iter().sum();
        let weights = if seen > 0.0 { w.iter().map(|x| x / seen).collect() } else { w };
        let params = self.dishes.iter().map(|(_, d)| d.stats.report(mode, rng)).collect();
        HdpPosterior { dish_ids, weights, unseen_weight, params }
    }
}
