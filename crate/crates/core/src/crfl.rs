//! Coupled space/time/speed seating.
//!
//! Every observation is one customer in each of three seatings and carries
//! the same customer id in all of them. Space restaurants are data groups;
//! time and speed restaurants are the live space dishes, so the observation's
//! time and speed customers always sit in the restaurant named by the dish
//! of its space table.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crf::{CustomerId, DishId, HdpSeating, RestaurantId, SeatingCounts, TableId};
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::stats::{Conjugate, DirMultStats, NigStats};
use crate::trajectory::Observation;

/// Per-sweep timing of the space-level steps, for scaling checks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepStats {
    pub customer_updates: usize,
    pub table_updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThdpSeating {
    pub space: HdpSeating<DirMultStats>,
    pub time: HdpSeating<NigStats>,
    pub speed: HdpSeating<NigStats>,
    groups: Vec<RestaurantId>,
    group_members: Vec<Vec<CustomerId>>,
    coupled: bool,
}

impl ThdpSeating {
    /// Registers observations as unseated customers, indexed by position.
    pub fn new(observations: &[Observation], space_base: DirMultStats, time_base: NigStats, speed_base: NigStats) -> Result<Self> {
        let vocab = space_base.vocab_size();
        for (i, o) in observations.iter().enumerate() {
            if o.cell as usize >= vocab {
                return Err(Error::invalid_input(format!("observation {i}: cell {} outside vocabulary {vocab}", o.cell)));
            }
        }
        let groups: Vec<usize> = observations.iter().map(|o| o.group_id).collect();
        let n_groups = groups.iter().max().map_or(0, |g| g + 1);
        let mut group_members = vec![Vec::new(); n_groups];
        for (i, &g) in groups.iter().enumerate() {
            group_members[g].push(i);
        }
        Ok(Self {
            space: HdpSeating::new(space_base, observations.iter().map(|o| o.cell).collect()),
            time: HdpSeating::new(time_base, observations.iter().map(|o| o.timestamp).collect()),
            speed: HdpSeating::new(speed_base, observations.iter().map(|o| o.speed).collect()),
            groups,
            group_members,
            coupled: false,
        })
    }

    pub fn n_observations(&self) -> usize {
        self.groups.len()
    }

    pub fn is_coupled(&self) -> bool {
        self.coupled
    }

    /// One table per group, all on a single space dish.
    pub fn init_space(&mut self) {
        let assignments: Vec<_> = self.groups.iter().enumerate().map(|(c, &g)| (c, g)).collect();
        self.space.init_single_dish(&assignments);
    }

    /// Seats the time and speed customers after a space-only burn-in: one
    /// table per restaurant, all tables on a single dish.
    pub fn init_dependents(&mut self) -> Result<()> {
        let mut assignments = Vec::with_capacity(self.groups.len());
        for c in 0..self.groups.len() {
            let k = self
                .space
                .dish_of(c)
                .ok_or_else(|| Error::consistency(format!("observation {c} has no space dish")))?;
            assignments.push((c, k));
        }
        self.time.init_single_dish(&assignments);
        self.speed.init_single_dish(&assignments);
        self.coupled = true;
        Ok(())
    }

    /// Space-only CRF sweep used during burn-in.
    pub fn space_sweep<R: Rng + ?Sized>(&mut self, hypers: &mut HyperParams, resample: bool, rng: &mut R) -> Result<()> {
        self.space.crf_pass(hypers.alpha_s.value, hypers.gamma_s.value, rng)?;
        if resample {
            self.space.resample_concentrations(&mut hypers.alpha_s, &mut hypers.gamma_s, rng);
        }
        Ok(())
    }

    fn close_dependents(&mut self, k: DishId) -> Result<()> {
        if self.coupled {
            self.time.close_restaurant(k)?;
            self.speed.close_restaurant(k)?;
        }
        Ok(())
    }

    fn space_unseat(&mut self, c: CustomerId) -> Result<()> {
        if let Some(k) = self.space.unseat(c) {
            self.close_dependents(k)?;
        }
        Ok(())
    }

    /// Seats customer `c` of a time or speed seating in restaurant `k` with
    /// the plain CRF table draw.
    fn seat_dependent<R: Rng + ?Sized>(
        seating: &mut HdpSeating<NigStats>,
        c: CustomerId,
        k: DishId,
        alpha: f64,
        gamma: f64,
        rng: &mut R,
    ) -> Result<()> {
        let v = seating.value(c);
        let ln_g = seating.ln_predictive_by_dish(v);
        let choice = seating.table_candidates(k, &ln_g, seating.ln_prior_predictive(v), alpha, gamma).sample(rng)?;
        seating.seat(c, k, choice);
        Ok(())
    }

    fn seat_dependents<R: Rng + ?Sized>(&mut self, c: CustomerId, k: DishId, h: &HyperParams, rng: &mut R) -> Result<()> {
        Self::seat_dependent(&mut self.time, c, k, h.alpha_t.value, h.gamma_t.value, rng)?;
        Self::seat_dependent(&mut self.speed, c, k, h.alpha_e.value, h.gamma_e.value, rng)
    }

    /// `ln pref_time(y, k) + ln pref_speed(z, k)` for every space dish slot,
    /// plus the value for a brand-new space dish.
    fn dependent_terms(&self, c: CustomerId, h: &HyperParams) -> (Vec<f64>, f64) {
        let (y, z) = (self.time.value(c), self.speed.value(c));
        let gy = self.time.ln_predictive_by_dish(y);
        let gz = self.speed.ln_predictive_by_dish(z);
        let py = self.time.preference(&gy, self.time.ln_prior_predictive(y), h.gamma_t.value);
        let pz = self.speed.preference(&gz, self.speed.ln_prior_predictive(z), h.gamma_e.value);
        let mut terms = vec![f64::NEG_INFINITY; self.space.dish_capacity()];
        for (k, _) in self.space.dishes() {
            terms[k] = py.ln_at(&self.time, Some(k), h.alpha_t.value) + pz.ln_at(&self.speed, Some(k), h.alpha_e.value);
        }
        (terms, py.ln_menu() + pz.ln_menu())
    }

    /// Space-table candidate weights for an observation whose three
    /// customers are all unseated.
    pub fn observation_candidates(&self, c: CustomerId, h: &HyperParams) -> crate::crf::TableCandidates {
        let x = self.space.value(c);
        let mut lik = self.space.ln_predictive_by_dish(x);
        let mut lik0 = self.space.ln_prior_predictive(x);
        if self.coupled {
            let (terms, fresh) = self.dependent_terms(c, h);
            for (l, t) in lik.iter_mut().zip(&terms) {
                *l += t;
            }
            lik0 += fresh;
        }
        self.space.table_candidates(self.groups[c], &lik, lik0, h.alpha_s.value, h.gamma_s.value)
    }

    /// Customer-level step for one observation.
    pub fn resample_observation<R: Rng + ?Sized>(&mut self, c: CustomerId, h: &HyperParams, rng: &mut R) -> Result<()> {
        if self.coupled {
            self.time.unseat(c);
            self.speed.unseat(c);
        }
        self.space_unseat(c)?;
        let choice = self.observation_candidates(c, h).sample(rng)?;
        let (_, k, _) = self.space.seat(c, self.groups[c], choice);
        if self.coupled {
            self.seat_dependents(c, k, h, rng)?;
        }
        Ok(())
    }

    /// Dish weights for a detached space table whose linked customers are
    /// unseated; the preference terms use the members listed in `selected`.
    pub fn table_dish_candidates(
        &self,
        members: &[CustomerId],
        selected: &[CustomerId],
        h: &HyperParams,
    ) -> crate::crf::DishCandidates {
        let xs: Vec<u32> = members.iter().map(|&c| self.space.value(c)).collect();
        let cap = self.space.dish_capacity();
        let mut lik = vec![f64::NEG_INFINITY; cap];
        for (k, d) in self.space.dishes() {
            lik[k] = d.stats().ln_joint_predictive(&xs);
        }
        let mut lik0 = self.space.base().ln_joint_predictive(&xs);
        if self.coupled {
            for &c in selected {
                let (terms, fresh) = self.dependent_terms(c, h);
                for (l, t) in lik.iter_mut().zip(&terms) {
                    *l += t;
                }
                lik0 += fresh;
            }
        }
        self.space.dish_candidates(&lik, lik0, h.gamma_s.value)
    }

    /// Table-level step for space table `t` of group `j`.
    pub fn resample_space_table<R: Rng + ?Sized>(
        &mut self,
        j: RestaurantId,
        t: TableId,
        h: &HyperParams,
        rng: &mut R,
    ) -> Result<()> {
        let members: Vec<CustomerId> = match self.space.restaurant(j).and_then(|r| r.table(t)) {
            Some(tab) => tab.members().to_vec(),
            None => return Ok(()),
        };
        if self.coupled {
            for &c in &members {
                self.time.unseat(c);
                self.speed.unseat(c);
            }
        }
        if let Some(k) = self.space.detach_table(j, t) {
            self.close_dependents(k)?;
        }
        let selected: Vec<CustomerId> = if self.coupled {
            let m = h.customer_selection.min(members.len());
            if m == members.len() {
                members.clone()
            } else {
                index::sample(rng, members.len(), m).into_iter().map(|i| members[i]).collect()
            }
        } else {
            Vec::new()
        };
        let choice = self.table_dish_candidates(&members, &selected, h).sample(rng)?;
        let (k, _) = self.space.attach_table(j, t, choice);
        if self.coupled {
            for &c in &members {
                self.seat_dependents(c, k, h, rng)?;
            }
        }
        Ok(())
    }

    /// Moves the time and speed customers of `observations` from restaurant
    /// `from` to restaurant `to`, drawing each new table with the CRF rule.
    pub fn reseat_dependents<R: Rng + ?Sized>(
        &mut self,
        observations: &[CustomerId],
        from: DishId,
        to: DishId,
        h: &HyperParams,
        rng: &mut R,
    ) -> Result<()> {
        for &c in observations {
            for (name, s) in [("time", &self.time), ("speed", &self.speed)] {
                let r = s.seat_of(c).map(|x| x.restaurant);
                if r != Some(from) {
                    return Err(Error::consistency(format!(
                        "observation {c}: {name} customer in restaurant {r:?}, expected {from}"
                    )));
                }
            }
        }
        if from == to {
            return Ok(());
        }
        for &c in observations {
            self.time.unseat(c);
            self.speed.unseat(c);
            self.seat_dependents(c, to, h, rng)?;
        }
        if !self.space.dishes().any(|(k, _)| k == from) {
            for s in [&mut self.time, &mut self.speed] {
                if s.restaurant(from).is_some_and(|r| r.n_customers() == 0) {
                    s.close_restaurant(from)?;
                }
            }
        }
        Ok(())
    }

    /// One full sweep: time pass, speed pass, space customer and table steps
    /// group by group, then (optionally) all six concentrations.
    pub fn sweep<R: Rng + ?Sized>(&mut self, h: &mut HyperParams, resample: bool, rng: &mut R) -> Result<SweepStats> {
        if !self.coupled {
            return Err(Error::consistency("sweep before dependents were initialized"));
        }
        self.time.crf_pass(h.alpha_t.value, h.gamma_t.value, rng)?;
        self.speed.crf_pass(h.alpha_e.value, h.gamma_e.value, rng)?;
        let mut stats = SweepStats::default();
        for j in 0..self.group_members.len() {
            for i in 0..self.group_members[j].len() {
                let c = self.group_members[j][i];
                self.resample_observation(c, h, rng)?;
                stats.customer_updates += 1;
            }
            let tables: Vec<TableId> = match self.space.restaurant(j) {
                Some(r) => r.tables().map(|(t, _)| t).collect(),
                None => Vec::new(),
            };
            for t in tables {
                self.resample_space_table(j, t, h, rng)?;
                stats.table_updates += 1;
            }
        }
        if resample {
            self.resample_concentrations(h, rng);
        }
        Ok(stats)
    }

    pub fn resample_concentrations<R: Rng + ?Sized>(&self, h: &mut HyperParams, rng: &mut R) {
        self.space.resample_concentrations(&mut h.alpha_s, &mut h.gamma_s, rng);
        if self.coupled {
            self.time.resample_concentrations(&mut h.alpha_t, &mut h.gamma_t, rng);
            self.speed.resample_concentrations(&mut h.alpha_e, &mut h.gamma_e, rng);
        }
    }

    /// Joint log marginal likelihood of the data given the seating.
    pub fn ln_likelihood(&self) -> f64 {
        let mut ll = self.space.ln_likelihood();
        if self.coupled {
            ll += self.time.ln_likelihood() + self.speed.ln_likelihood();
        }
        ll
    }

    /// Full recount of all three seatings plus the coupling between them.
    pub fn check_consistency(&self) -> Result<[SeatingCounts; 3]> {
        let s = self.space.check_consistency()?;
        let t = self.time.check_consistency()?;
        let e = self.speed.check_consistency()?;
        for (c, &g) in self.groups.iter().enumerate() {
            if let Some(seat) = self.space.seat_of(c) {
                if seat.restaurant != g {
                    return Err(Error::consistency(format!("observation {c} sits outside its group {g}")));
                }
            }
        }
        if !self.coupled {
            return Ok([s, t, e]);
        }
        if s.customers != t.customers || s.customers != e.customers {
            return Err(Error::consistency(format!(
                "customer counts differ: space {}, time {}, speed {}",
                s.customers, t.customers, e.customers
            )));
        }
        for c in 0..self.groups.len() {
            let k = self.space.dish_of(c);
            let rt = self.time.seat_of(c).map(|x| x.restaurant);
            let re = self.speed.seat_of(c).map(|x| x.restaurant);
            if rt != k || re != k {
                return Err(Error::consistency(format!(
                    "observation {c}: space dish {k:?}, time restaurant {rt:?}, speed restaurant {re:?}"
                )));
            }
        }
        let dishes = self.space.dish_ids();
        if self.time.restaurant_ids() != dishes || self.speed.restaurant_ids() != dishes {
            return Err(Error::consistency("time/speed restaurants do not match live space dishes"));
        }
        Ok([s, t, e])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::{DishChoice, TableChoice};
    use crate::stats::NigPrior;
    use crate::util::normalize_ln;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(cell: u32, t: f64, v: f64, g: usize) -> Observation {
        Observation { traj_id: 0, group_id: g, cell, timestamp: t, speed: v, position: (0.0, 0.0) }
    }

    fn seating(o: &[Observation]) -> ThdpSeating {
        let nig = NigStats::new(NigPrior::new(0.0, 1.0, 1.0, 1.0).unwrap());
        ThdpSeating::new(o, DirMultStats::new(6, 0.5).unwrap(), nig.clone(), nig).unwrap()
    }

    #[test]
    fn single_observation() {
        let mut s = seating(&[obs(2, 1.0, 0.5, 0)]);
        s.init_space();
        s.init_dependents().unwrap();
        let mut h = HyperParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            s.sweep(&mut h, true, &mut rng).unwrap();
            let [a, b, c] = s.check_consistency().unwrap();
            assert_eq!((a.dishes, b.dishes, c.dishes), (1, 1, 1));
        }
    }

    #[test]
    fn zero_alpha_forbids_new_table() {
        let o: Vec<_> = (0..4).map(|i| obs(i, i as f64, 1.0, 0)).collect();
        let mut s = seating(&o);
        s.init_space();
        s.init_dependents().unwrap();
        let mut h = HyperParams::default();
        h.alpha_s.value = 0.0;
        s.time.unseat(0);
        s.speed.unseat(0);
        s.space_unseat(0).unwrap();
        let p = normalize_ln(&s.observation_candidates(0, &h).ln_weights);
        assert_eq!(*p.last().unwrap(), 0.0);
    }

    #[test]
    fn new_dish_branch_uses_menu_preference() {
        let o = vec![obs(0, 0.0, 1.0, 0), obs(1, 5.0, 2.0, 0)];
        let mut s = seating(&o);
        s.init_space();
        s.init_dependents().unwrap();
        let h = HyperParams::default();
        let (_, fresh) = s.dependent_terms(1, &h);
        let pref = |seating: &HdpSeating<NigStats>, v: f64, a: f64, g: f64| {
            seating.ln_restaurant_preference(Some(999), &seating.ln_predictive_by_dish(v), seating.ln_prior_predictive(v), a, g)
        };
        let expect = pref(&s.time, 5.0, h.alpha_t.value, h.gamma_t.value) + pref(&s.speed, 2.0, h.alpha_e.value, h.gamma_e.value);
        assert_eq!(fresh, expect);
    }

    #[test]
    fn reseat_same_dish_is_noop_and_moves_preserve_counts() {
        let o: Vec<_> = (0..10).map(|i| obs(i % 6, i as f64, 1.0 + i as f64 * 0.1, i as usize % 2)).collect();
        let mut s = seating(&o);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // two space dishes: observations 0..5 on dish a, 5..10 on dish b
        let (_, a, _) = s.space.seat(0, 0, TableChoice::New(DishChoice::New));
        let (_, b, _) = s.space.seat(5, 1, TableChoice::New(DishChoice::New));
        for c in 1..5 {
            s.space.seat(c, o[c].group_id, TableChoice::New(DishChoice::Existing(a)));
        }
        for c in 6..10 {
            s.space.seat(c, o[c].group_id, TableChoice::New(DishChoice::Existing(b)));
        }
        s.init_dependents().unwrap();
        let h = HyperParams::default();
        let before = s.clone();
        s.reseat_dependents(&[0, 1, 2, 3, 4], a, a, &h, &mut rng).unwrap();
        assert_eq!(s, before);
        // move the linked customers of five observations as the table step would
        s.reseat_dependents(&[0, 1, 2, 3, 4], a, b, &h, &mut rng).unwrap();
        assert_eq!(s.time.n_seated(), 10);
        assert_eq!(s.speed.n_seated(), 10);
        assert_eq!(s.time.restaurant(b).unwrap().n_customers(), 10);
        assert!(s.reseat_dependents(&[0], a, b, &h, &mut rng).is_err());
    }

    #[test]
    fn last_observation_leaving_closes_restaurants() {
        let o = vec![obs(0, 0.0, 1.0, 0), obs(5, 50.0, 9.0, 0)];
        let mut s = seating(&o);
        let (_, a, _) = s.space.seat(0, 0, TableChoice::New(DishChoice::New));
        let (_, b, _) = s.space.seat(1, 0, TableChoice::New(DishChoice::New));
        s.init_dependents().unwrap();
        s.time.unseat(1);
        s.speed.unseat(1);
        s.space_unseat(1).unwrap();
        assert!(s.time.restaurant(b).is_none() && s.speed.restaurant(b).is_none());
        assert!(s.time.restaurant(a).is_some());
        let h = HyperParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let choice = s.observation_candidates(1, &h).sample(&mut rng).unwrap();
        let (_, k, _) = s.space.seat(1, 0, choice);
        s.seat_dependents(1, k, &h, &mut rng).unwrap();
        s.check_consistency().unwrap();
    }

    #[test]
    fn sweeps_keep_everything_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let o: Vec<_> = (0..80)
            .map(|i| {
                let f = i % 3;
                obs((f * 2 + i % 2) as u32, f as f64 * 10.0 + (i % 7) as f64 * 0.1, 1.0 + f as f64, i % 4)
            })
            .collect();
        let mut s = seating(&o);
        s.init_space();
        let mut h = HyperParams::default();
        h.customer_selection = 2;
        for _ in 0..5 {
            s.space_sweep(&mut h, true, &mut rng).unwrap();
        }
        s.init_dependents().unwrap();
        s.check_consistency().unwrap();
        for _ in 0..30 {
            let st = s.sweep(&mut h, true, &mut rng).unwrap();
            assert_eq!(st.customer_updates, 80);
            s.check_consistency().unwrap();
        }
    }
}
