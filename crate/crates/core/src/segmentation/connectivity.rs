//! Connectivity enforcement: small 4-connected fragments are merged into
//! their largest neighbour and every label ends up as one component.

use std::collections::VecDeque;

use crate::geometry::Grid;

use super::slic::SuperpixelMap;

/// 4-connected components of equal label; masked pixels get `usize::MAX`.
pub fn components(grid: &Grid, labels: &[u32]) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; labels.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if labels[start] == 0 || comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        comp[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in neighbours(grid, i) {
                if labels[j] == labels[start] && comp[j] == usize::MAX {
                    comp[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

pub fn neighbours(grid: &Grid, i: usize) -> impl Iterator<Item = usize> {
    let (col, row) = grid.col_row(i);
    let (nx, ny) = (grid.nx(), grid.ny());
    let g = *grid;
    [
        (col > 0).then(|| g.index(col - 1, row)),
        (col + 1 < nx).then(|| g.index(col + 1, row)),
        (row > 0).then(|| g.index(col, row - 1)),
        (row + 1 < ny).then(|| g.index(col, row + 1)),
    ]
    .into_iter()
    .flatten()
}

/// Merges components smaller than a quarter of the mean superpixel size into
/// their largest 4-neighbouring component, then gives every remaining
/// component its own label. Labels stay in their original order; extra
/// fragments of a split label are numbered after all original labels.
pub fn enforce_connectivity(sp: &SuperpixelMap) -> SuperpixelMap {
    let grid = sp.grid;
    let mut labels = sp.labels.clone();
    let unmasked = labels.iter().filter(|&&l| l > 0).count();
    let distinct = {
        let mut seen: Vec<u32> = labels.iter().copied().filter(|&l| l > 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len().max(1)
    };
    let threshold = unmasked as f64 / distinct as f64 / 4.0;

    loop {
        let (comp, sizes) = components(&grid, &labels);
        let mut first_pixel = vec![usize::MAX; sizes.len()];
        for (i, &c) in comp.iter().enumerate() {
            if c != usize::MAX && first_pixel[c] == usize::MAX {
                first_pixel[c] = i;
            }
        }
        // small components in raster order, each merged into a stable target
        let mut merged = false;
        let mut absorbed = vec![false; sizes.len()];
        let mut locked = vec![false; sizes.len()];
        let mut relabel: Vec<Option<u32>> = vec![None; sizes.len()];
        for c in 0..sizes.len() {
            if (sizes[c] as f64) >= threshold || absorbed[c] || locked[c] {
                continue;
            }
            let mut best: Option<(usize, usize)> = None;
            for (i, &ci) in comp.iter().enumerate() {
                if ci != c {
                    continue;
                }
                for j in neighbours(&grid, i) {
                    let cj = comp[j];
                    if cj == usize::MAX || cj == c || absorbed[cj] {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bc, bs)) => sizes[cj] > bs || (sizes[cj] == bs && cj < bc),
                    };
                    if better {
                        best = Some((cj, sizes[cj]));
                    }
                }
            }
            if let Some((target, _)) = best {
                relabel[c] = Some(labels[first_pixel[target]]);
                absorbed[c] = true;
                // the target keeps its label for the rest of this pass
                locked[target] = true;
                merged = true;
            }
        }
        if !merged {
            return finalize(grid, labels, &comp, &sizes, &first_pixel, &sp.features);
        }
        for (i, c) in comp.iter().enumerate() {
            if *c != usize::MAX {
                if let Some(l) = relabel[*c] {
                    labels[i] = l;
                }
            }
        }
    }
}

fn finalize(
    grid: Grid,
    labels: Vec<u32>,
    comp: &[usize],
    sizes: &[usize],
    first_pixel: &[usize],
    features: &[Vec<f64>],
) -> SuperpixelMap {
    // the largest component of each label keeps it (earliest on ties)
    let max_label = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut primary = vec![usize::MAX; max_label + 1];
    for c in 0..sizes.len() {
        let l = labels[first_pixel[c]] as usize;
        if primary[l] == usize::MAX || sizes[c] > sizes[primary[l]] {
            primary[l] = c;
        }
    }
    let mut order: Vec<(u8, usize, usize)> = (0..sizes.len())
        .map(|c| {
            let l = labels[first_pixel[c]];
            let is_primary = primary[l as usize] == c;
            // primaries first by label, then fragments in raster order
            if is_primary {
                (0, l as usize, c)
            } else {
                (1, first_pixel[c], c)
            }
        })
        .collect();
    order.sort_unstable();
    let mut new_label = vec![0u32; sizes.len()];
    for (rank, &(_, _, c)) in order.iter().enumerate() {
        new_label[c] = rank as u32 + 1;
    }
    let out: Vec<u32> = comp
        .iter()
        .map(|&c| if c == usize::MAX { 0 } else { new_label[c] })
        .collect();
    SuperpixelMap::from_labels(grid, out, features.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;

    fn map(nx: usize, ny: usize, labels: Vec<u32>) -> SuperpixelMap {
        let grid = Grid::new(nx, ny, Window::unit_square()).unwrap();
        let features = vec![vec![0.0; labels.len()]];
        SuperpixelMap::from_labels(grid, labels, features)
    }

    #[test]
    fn connected_map_is_unchanged() {
        let labels = vec![1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4];
        let sp = map(4, 4, labels.clone());
        assert_eq!(enforce_connectivity(&sp).labels, labels);
    }

    #[test]
    fn orphan_pixel_is_absorbed() {
        let mut labels = vec![1u32; 36];
        labels[14] = 2;
        labels.extend(vec![3u32; 36]);
        let sp = map(6, 12, labels);
        let out = enforce_connectivity(&sp);
        assert_eq!(out.labels[14], 1);
        assert_eq!(out.n_superpixels(), 2);
    }

    #[test]
    fn split_label_gets_two_ids() {
        // label 1 in two large disconnected halves separated by label 2
        let labels = vec![1, 1, 2, 2, 1, 1, 1, 1, 2, 2, 1, 1];
        let sp = map(6, 2, labels);
        let out = enforce_connectivity(&sp);
        assert_eq!(out.n_superpixels(), 3);
        assert_eq!(out.labels, vec![1, 1, 2, 2, 3, 3, 1, 1, 2, 2, 3, 3]);
    }
}
