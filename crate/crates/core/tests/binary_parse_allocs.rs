//! Pins the allocation behavior of the binary event parser: parsing a full
//! in-memory recording performs a constant number of heap allocations, not
//! one per event or a realloc ladder.
//!
//! The counting allocator is process-global, so this file holds exactly one
//! test; a sibling test in the same binary would race the counter.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use evcast::events::{Event, EventStream, Polarity, SensorGeometry};
use evcast::io::{parse_event_binary_slice, write_event_binary};

struct CountingAllocator;

static ALLOCATIONS: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::SeqCst);
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::SeqCst);
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static ALLOCATOR: CountingAllocator = CountingAllocator;

#[test]
fn slice_parse_allocates_once_for_the_event_vector() {
    let geometry = SensorGeometry::new(1280, 720);
    let events: Vec<Event> = (0..100_000u64)
        .map(|i| Event {
            t_us: i * 3,
            x: (i % 1280) as u16,
            y: (i % 720) as u16,
            polarity: if i % 2 == 0 { Polarity::On } else { Polarity::Off },
        })
        .collect();
    let stream = EventStream::new(geometry, events).unwrap();
    let mut buf = Vec::new();
    write_event_binary(&mut buf, &stream).unwrap();

    let before = ALLOCATIONS.load(Ordering::SeqCst);
    let parsed = parse_event_binary_slice(&buf).unwrap();
    let after = ALLOCATIONS.load(Ordering::SeqCst);

    assert_eq!(parsed.events().len(), 100_000);
    let delta = after - before;
    assert!(delta <= 2, "parsing 100k events allocated {delta} times");
}
