//! Property tests for the spec-level invariants.

use proptest::prelude::*;

use qgcn::image::{ColorSpace, ImageBuffer};
use qgcn::jpeg::{
    build_qmap, dezigzag, ijg_base_tables, pad_to_block_multiple, parse_jpeg_metadata,
    scale_qtable, serialize_test_jpeg, unpad, zigzag, ComponentInfo, Precision, QuantTable,
};
use qgcn::tensor::{pixel_shuffle_raw, pixel_unshuffle_raw, Tensor};

fn arb_table(precision: Precision) -> impl Strategy<Value = QuantTable> {
    let max = match precision {
        Precision::EightBit => 255u16,
        Precision::SixteenBit => u16::MAX,
    };
    (prop::collection::vec(1..=max, 64), 0u8..=3).prop_map(move |(vals, id)| {
        let flat: [u16; 64] = vals.try_into().expect("length 64");
        QuantTable::from_flat(&flat, precision, id).expect("entries validated by construction")
    })
}

proptest! {
    #[test]
    fn scale_qtable_antitone_and_bounded(qf1 in 1u8..=100, qf2 in 1u8..=100) {
        let (lo, hi) = if qf1 <= qf2 { (qf1, qf2) } else { (qf2, qf1) };
        let (luma, chroma) = ijg_base_tables();
        for base in [&luma, &chroma] {
            let at_lo = scale_qtable(base, lo).unwrap();
            let at_hi = scale_qtable(base, hi).unwrap();
            for (a, b) in at_lo.flat().iter().zip(at_hi.flat().iter()) {
                prop_assert!(a >= b, "qf {} entry {} < qf {} entry {}", lo, a, hi, b);
                prop_assert!((1..=255).contains(a));
                prop_assert!((1..=255).contains(b));
            }
        }
    }

    #[test]
    fn dezigzag_inverts_zigzag(vals in prop::collection::vec(0u16..=9999, 64)) {
        let natural: [u16; 64] = vals.try_into().unwrap();
        prop_assert_eq!(dezigzag(&zigzag(&natural)), natural);
        prop_assert_eq!(zigzag(&dezigzag(&natural)), natural);
    }

    #[test]
    fn dqt_parse_recovers_serialized_tables(
        t8 in arb_table(Precision::EightBit),
        t16 in arb_table(Precision::SixteenBit),
    ) {
        // distinct ids so both survive in the table map
        let mut t8 = t8;
        let mut t16 = t16;
        t8.table_id = 0;
        t16.table_id = 1;
        let comps = vec![ComponentInfo { id: 1, h_sampling: 1, v_sampling: 1, table_id: 0 }];
        let stream = serialize_test_jpeg(64, 48, &[t8.clone(), t16.clone()], &comps);
        let meta = parse_jpeg_metadata(&stream).unwrap();
        prop_assert_eq!(&meta.tables[&0], &t8);
        prop_assert_eq!(&meta.tables[&1], &t16);
    }

    #[test]
    fn qmap_tiling_law_everywhere(w in 1usize..40, h in 1usize..40) {
        let (luma, chroma) = ijg_base_tables();
        let scaled = scale_qtable(&luma, 30).unwrap();
        let qm = build_qmap(w, h, &scaled, Some(&chroma)).unwrap();
        for y in 0..h {
            for x in 0..w {
                prop_assert_eq!(qm.value_at(0, x, y), scaled.get(y % 8, x % 8) as f32);
                prop_assert_eq!(qm.value_at(1, x, y), chroma.get(y % 8, x % 8) as f32);
            }
        }
    }

    #[test]
    fn pad_unpad_round_trip(
        w in 1usize..40,
        h in 1usize..40,
        seed in 0u8..=255,
    ) {
        let data: Vec<u8> = (0..w * h).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let img = ImageBuffer::new(w, h, ColorSpace::Gray, data).unwrap();
        let (padded, orig) = pad_to_block_multiple(&img);
        prop_assert_eq!(padded.width() % 8, 0);
        prop_assert_eq!(padded.height() % 8, 0);
        prop_assert!(padded.width() >= w && padded.width() < w + 8);
        let restored = unpad(&padded, orig).unwrap();
        prop_assert_eq!(restored, img);
    }

    #[test]
    fn pixel_shuffle_unshuffle_identity(
        n in 1usize..3,
        c_base in 1usize..4,
        h in 1usize..6,
        w in 1usize..6,
        r in 1usize..4,
    ) {
        let c = c_base * r * r;
        let len = n * c * h * w;
        let data: Vec<f32> = (0..len).map(|i| i as f32 * 0.37 - 3.0).collect();
        let t = Tensor::new(&[n, c, h, w], data).unwrap();
        let shuffled = pixel_shuffle_raw(&t, r).unwrap();
        prop_assert_eq!(shuffled.shape(), &[n, c / (r * r), h * r, w * r]);
        let back = pixel_unshuffle_raw(&shuffled, r).unwrap();
        prop_assert!(back.bit_eq(&t));
    }
}
