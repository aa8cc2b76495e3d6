use rand::seq::index;

use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DownsampleError {
    #[error("cap {cap} is smaller than the {groups} non-empty groups")]
    CapTooSmall { cap: usize, groups: usize },
}

/// Per-group sample sizes proportional to group size, summing to exactly
/// `cap` when the total exceeds it. Uses floor quotas plus largest-remainder
/// rounding, then guarantees every non-empty group at least one slot.
pub fn proportional_quotas(sizes: &[usize], cap: usize) -> Result<Vec<usize>, DownsampleError> {
    let total: usize = sizes.iter().sum();
    if total <= cap {
        return Ok(sizes.to_vec());
    }
    let non_empty = sizes.iter().filter(|&&s| s > 0).count();
    if cap < non_empty {
        return Err(DownsampleError::CapTooSmall {
            cap,
            groups: non_empty,
        });
    }
    // exact integer arithmetic: quota_g = cap * s_g / total
    let mut quotas: Vec<usize> = Vec::with_capacity(sizes.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(sizes.len());
    for (g, &s) in sizes.iter().enumerate() {
        let num = cap as u128 * s as u128;
        quotas.push((num / total as u128) as usize);
        remainders.push((num % total as u128, g));
    }
    let mut left = cap - quotas.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(rem, g) in &remainders {
        if left == 0 {
            break;
        }
        if rem > 0 {
            quotas[g] += 1;
            left -= 1;
        }
    }
    for g in 0..sizes.len() {
        if sizes[g] > 0 && quotas[g] == 0 {
            let donor = (0..sizes.len())
                .filter(|&h| quotas[h] > 1)
                .max_by(|&a, &b| quotas[a].cmp(&quotas[b]).then(b.cmp(&a)))
                .expect("cap >= non-empty groups leaves a donor");
            quotas[donor] -= 1;
            quotas[g] = 1;
        }
    }
    Ok(quotas)
}

/// Picks at most `cap` members across groups, proportionally to group size.
/// Sampling within a group is without replacement and seeded. The result
/// keeps group order, and each group's picks are in ascending order.
pub fn downsample_for_view(
    groups: &[(usize, Vec<usize>)],
    cap: usize,
    seed: u64,
) -> Result<Vec<usize>, DownsampleError> {
    let sizes: Vec<usize> = groups.iter().map(|(_, m)| m.len()).collect();
    let quotas = proportional_quotas(&sizes, cap)?;
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(quotas.iter().sum());
    for ((_, members), quota) in groups.iter().zip(quotas) {
        if quota >= members.len() {
            out.extend_from_slice(members);
            continue;
        }
        let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), quota)
            .into_iter()
            .map(|i| members[i])
            .collect();
        picked.sort_unstable();
        out.extend(picked);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn under_cap_returns_all() {
        let groups = vec![(0, (0..3000).collect()), (1, (3000..4000).collect())];
        let out = downsample_for_view(&groups, 5000, 1).unwrap();
        assert_eq!(out.len(), 4000);
    }

    #[test]
    fn exact_proportion() {
        assert_eq!(proportional_quotas(&[8000, 2000], 5000).unwrap(), vec![4000, 1000]);
    }

    #[test]
    fn floor_rule_gives_everyone_one() {
        let mut sizes = vec![1; 4999];
        sizes.push(5001);
        let q = proportional_quotas(&sizes, 5000).unwrap();
        assert!(q.iter().all(|&x| x >= 1));
        assert_eq!(q.iter().sum::<usize>(), 5000);
        assert!(q.iter().zip(&sizes).all(|(q, s)| q <= s));
    }

    #[test]
    fn cap_too_small() {
        assert_eq!(
            proportional_quotas(&[5, 5, 5], 2),
            Err(DownsampleError::CapTooSmall { cap: 2, groups: 3 })
        );
    }

    #[test]
    fn seeded_and_sized() {
        let groups: Vec<(usize, Vec<usize>)> = (0..5)
            .map(|g| (g, (g * 1000..g * 1000 + 300 + g * 211).collect()))
            .collect();
        let a = downsample_for_view(&groups, 700, 42).unwrap();
        let b = downsample_for_view(&groups, 700, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 700);
        let c = downsample_for_view(&groups, 700, 43).unwrap();
        assert_ne!(a, c);
    }
}
