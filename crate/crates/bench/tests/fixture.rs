use atmcash_bench::Fixture;
use atmcash_core::{Profile, Variant};

#[test]
fn fixture_exercises_every_step() {
    for variant in [Variant::Plain, Variant::Compact] {
        let mut f = Fixture::new(Profile::Toy, variant, 2);
        let split = f.withdraw_batch(2);
        assert!(split.user > std::time::Duration::ZERO && split.atm > std::time::Duration::ZERO);
        let tx = f.spend_once();
        assert_ne!(tx, f.tx);
        assert!(f.verify_once());
    }
}
