use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Dense table of one value per (base station, user) pair, stored BS-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerLink<T> {
    num_cells: usize,
    num_users: usize,
    data: Vec<T>,
}

impl<T> PerLink<T> {
    pub fn from_fn(num_cells: usize, num_users: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(num_cells * num_users);
        for q in 0..num_cells {
            for k in 0..num_users {
                data.push(f(q, k));
            }
        }
        Self {
            num_cells,
            num_users,
            data,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flat_index(&self, q: usize, k: usize) -> usize {
        debug_assert!(q < self.num_cells && k < self.num_users);
        q * self.num_users + k
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.data.iter_mut()
    }

    /// `((q, k), value)` in BS-major order.
    pub fn indexed(&self) -> impl Iterator<Item = ((usize, usize), &T)> {
        let k_count = self.num_users;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| ((i / k_count, i % k_count), v))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerLink<U> {
        PerLink {
            num_cells: self.num_cells,
            num_users: self.num_users,
            data: self.data.iter().map(&mut f).collect(),
        }
    }
}

impl<T: Clone> PerLink<T> {
    pub fn filled(num_cells: usize, num_users: usize, value: T) -> Self {
        Self {
            num_cells,
            num_users,
            data: vec![value; num_cells * num_users],
        }
    }
}

impl<T> Index<(usize, usize)> for PerLink<T> {
    type Output = T;
    fn index(&self, (q, k): (usize, usize)) -> &T {
        &self.data[self.flat_index(q, k)]
    }
}

impl<T> IndexMut<(usize, usize)> for PerLink<T> {
    fn index_mut(&mut self, (q, k): (usize, usize)) -> &mut T {
        let i = self.flat_index(q, k);
        &mut self.data[i]
    }
}
