//! Read-only fan-out over evaluation work. Results merge by item index,
//! so the outcome is independent of the thread count.

/// Worker count from `PMNAV_THREADS`; unset or unparsable means one.
pub fn thread_count() -> usize {
    std::env::var("PMNAV_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Applies `f` to every item, possibly across threads. The output is in
/// item order regardless of scheduling.
pub fn par_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let threads = threads.min(items.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let slot_ptr = SendPtr(slots.as_mut_ptr());
    std::thread::scope(|s| {
        for _ in 0..threads {
            let next = &next;
            let f = &f;
            let slot_ptr = &slot_ptr;
            s.spawn(move || loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(&items[i]);
                // Each index is claimed by exactly one worker, so the
                // write targets a distinct slot.
                unsafe { *slot_ptr.0.add(i) = Some(out) };
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

struct SendPtr<R>(*mut Option<R>);
unsafe impl<R: Send> Sync for SendPtr<R> {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_order_matches_input_order_at_any_width() {
        let items: Vec<usize> = (0..57).collect();
        let one = par_map(&items, 1, |&x| x * x);
        for w in [2, 3, 8] {
            assert_eq!(par_map(&items, w, |&x| x * x), one);
        }
        assert_eq!(one[13], 169);
    }

    #[test]
    fn empty_and_singleton_inputs_pass_through() {
        let none: Vec<u8> = vec![];
        assert!(par_map(&none, 4, |&x| x).is_empty());
        assert_eq!(par_map(&[7u8], 4, |&x| x + 1), vec![8]);
    }
}
