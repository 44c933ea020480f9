use a2net::{Payload, TensorFile};
use proptest::collection::vec;
use proptest::prelude::*;

fn file() -> impl Strategy<Value = TensorFile> {
    vec(1usize..5, 0..5).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        let single = vec(any::<u32>(), n)
            .prop_map(|b| Payload::Single(b.into_iter().map(f32::from_bits).collect()));
        let double = vec(any::<u64>(), n)
            .prop_map(|b| Payload::Double(b.into_iter().map(f64::from_bits).collect()));
        (Just(dims), prop_oneof![single, double])
            .prop_map(|(dims, payload)| TensorFile::new(dims, payload).unwrap())
    })
}

proptest! {
    #[test]
    fn encode_decode_is_bit_exact(f in file()) {
        let bytes = f.encode().unwrap();
        let back = TensorFile::decode(&bytes).unwrap();
        prop_assert_eq!(&back.dims, &f.dims);
        prop_assert_eq!(back.payload.bits(), f.payload.bits());
        prop_assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn truncated_files_are_rejected(f in file(), cut in 1usize..8) {
        let bytes = f.encode().unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(TensorFile::decode(&bytes[..bytes.len() - cut]).is_err());
    }
}

#[test]
fn file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.a2tn");
    let f = TensorFile::new(
        vec![2, 1, 1, 3],
        Payload::Double(vec![0.5, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, f64::NAN]),
    )
    .unwrap();
    f.write(&path).unwrap();
    let back = TensorFile::read(&path).unwrap();
    assert_eq!(back.payload.bits(), f.payload.bits());
    assert_eq!(std::fs::read(&path).unwrap(), f.encode().unwrap());
}

#[test]
fn missing_file_reports_path() {
    let err = TensorFile::read(std::path::Path::new("/nonexistent/x.a2tn")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/x.a2tn"));
}
