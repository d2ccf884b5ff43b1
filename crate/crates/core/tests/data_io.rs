use proptest::prelude::*;
use std::fs;

use rfselect::data::{ingest_csv, write_csv, Column, ColumnKind, Dataset, Frame, IngestOptions, Schema};

const MALARIA_SCHEMA: &str = "\
repellent=categorical
bed_net=categorical
roof=categorical
utensils=categorical
constructions=categorical
soil=categorical
water_course=categorical
majority_class=categorical
season=categorical
village=categorical
house=categorical
rainy_days_before=categorical
rainy_days_during=discrete
fragmentation=categorical
openings=categorical
inhabitants=categorical
mean_rainfall=categorical
vegetation=categorical
total_mosquitoes=discrete
anopheles=discrete
anopheles_infected=ignore
";

fn malaria_row(i: usize) -> Vec<String> {
    let yn = |k: usize| if (i + k).is_multiple_of(2) { "Yes" } else { "No" }.to_string();
    let q = |k: usize| format!("Q{}", (i + k) % 4 + 1);
    vec![
        yn(0),
        yn(1),
        if i.is_multiple_of(3) { "Sheet metal" } else { "Straw" }.into(),
        yn(2),
        yn(3),
        if i.is_multiple_of(2) { "Humid" } else { "Dry" }.into(),
        yn(4),
        format!("{}", i % 3 + 1),
        format!("{}", i % 4 + 1),
        format!("V{}", i % 9 + 1),
        format!("H{}", i % 41 + 1),
        format!("Q{}", i % 3 + 1),
        format!("{}", i % 4),
        q(1),
        q(2),
        format!("Q{}", i % 3 + 1),
        q(3),
        q(0),
        format!("{}", (i * 37) % 482),
        format!("{}", (i * 11) % 88),
        format!("{}", i % 10),
    ]
}

#[test]
fn malaria_layout_gives_nineteen_predictors() {
    let dir = tempfile::tempdir().unwrap();
    let schema = Schema::parse(MALARIA_SCHEMA).unwrap();
    let header: Vec<String> = schema.entries.iter().map(|(n, _)| n.clone()).collect();
    assert_eq!(header.len(), 21);

    let path = dir.path().join("malaria.csv");
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(&header).unwrap();
    for i in 0..90 {
        w.write_record(malaria_row(i)).unwrap();
    }
    w.flush().unwrap();

    let (data, report) = ingest_csv(&path, Some(&schema), &IngestOptions::new("anopheles")).unwrap();
    assert_eq!(data.n_rows(), 90);
    assert_eq!(data.n_cols(), 19);
    assert!(!data.names().iter().any(|n| n == "anopheles" || n == "anopheles_infected"));
    assert_eq!(report.excluded, vec!["anopheles_infected".to_string()]);
    let house = data.frame().column(data.frame().index_of("house").unwrap());
    assert_eq!(house.levels().unwrap().len(), 41);

    // The same layout with the infected count dropped via --exclude instead.
    let no_ignore = Schema::parse(&MALARIA_SCHEMA.replace("anopheles_infected=ignore", "anopheles_infected=discrete")).unwrap();
    let mut opts = IngestOptions::new("anopheles");
    opts.exclude = vec!["anopheles_infected".into()];
    let (data, _) = ingest_csv(&path, Some(&no_ignore), &opts).unwrap();
    assert_eq!(data.n_cols(), 19);
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..25).prop_flat_map(|n| {
        (
            prop::collection::vec(-1e6f64..1e6, n),
            prop::collection::vec(0u32..50, n),
            prop::collection::vec(prop::sample::select(vec!["a", "b c", "d,e", "\"q\"", "é"]), n),
            prop::collection::vec(0u32..1000, n),
        )
            .prop_map(move |(cont, disc, cat, y)| {
                let frame = Frame::new(
                    vec![
                        Column::numeric("cont", ColumnKind::Continuous, cont).unwrap(),
                        Column::numeric("disc", ColumnKind::Discrete, disc.into_iter().map(f64::from).collect()).unwrap(),
                        Column::categorical_from_labels("cat", &cat).unwrap(),
                    ],
                    n,
                )
                .unwrap();
                Dataset::new(frame, y.into_iter().map(f64::from).collect()).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(data in dataset_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&data, &path, "y", None).unwrap();
        let schema = Schema::parse("cont=continuous\ndisc=discrete\ncat=categorical\n").unwrap();
        let (back, _) = ingest_csv(&path, Some(&schema), &IngestOptions::new("y")).unwrap();
        prop_assert_eq!(back.target(), data.target());
        prop_assert_eq!(back.names(), data.names());
        for j in 0..data.n_cols() {
            let (a, b) = (data.frame().column(j), back.frame().column(j));
            prop_assert_eq!(a.kind(), b.kind());
            for i in 0..data.n_rows() {
                prop_assert_eq!(a.render(i), b.render(i));
            }
        }
        let text = fs::read_to_string(&path).unwrap();
        prop_assert!(text.starts_with("cont,disc,cat,y\n"));
    }
}
