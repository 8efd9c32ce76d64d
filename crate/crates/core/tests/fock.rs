use approx::assert_abs_diff_eq;
use bhqt::fock::{
    build_hamiltonian, density_expectation, enumerate_sector, fidelity, CompositeState, FockState, LatticeSpec,
    SectorRegistry, C64,
};
use bhqt::fermion::{fluid_density, FreeFermionChain};
use bhqt::propagator::eigensolve_sector;
use bhqt::units::mhz;
use proptest::prelude::*;

fn brute_force_dim(n_sites: usize, n_max: u8, n: usize) -> usize {
    let levels = n_max as usize + 1;
    (0..levels.pow(n_sites as u32))
        .filter(|&code| {
            let mut c = code;
            let mut total = 0;
            for _ in 0..n_sites {
                total += c % levels;
                c /= levels;
            }
            total == n
        })
        .count()
}

fn chain(n_sites: usize) -> LatticeSpec {
    LatticeSpec::uniform(n_sites, mhz(-9.0), mhz(-240.0), 2).unwrap()
}

#[test]
fn vacuum_sector() {
    let b = enumerate_sector(&chain(5), 0).unwrap();
    assert_eq!(b.dim(), 1);
    assert_eq!(b.state(0).occupations(), &[0, 0, 0, 0, 0]);
}

#[test]
fn reference_dimensions() {
    assert_eq!(enumerate_sector(&chain(5), 2).unwrap().dim(), 15);
    assert_eq!(enumerate_sector(&chain(5), 3).unwrap().dim(), 30);
    assert_eq!(enumerate_sector(&chain(7), 3).unwrap().dim(), 77);
    assert_eq!(enumerate_sector(&chain(7), 4).unwrap().dim(), 161);
}

#[test]
fn particle_number_out_of_range() {
    assert!(enumerate_sector(&chain(3), 7).is_err());
}

#[test]
fn basis_is_lexicographic_bijection() {
    let b = enumerate_sector(&chain(6), 4).unwrap();
    for w in b.states().windows(2) {
        assert!(w[0].occupations() < w[1].occupations());
    }
    for (i, s) in b.states().iter().enumerate() {
        assert_eq!(b.index_of(s), Some(i));
        assert_eq!(s.total(), 4);
    }
    assert_eq!(b.index_of(&FockState::new(vec![3, 1, 0, 0, 0, 0])), None);
}

#[test]
fn uniform_chain_single_particle_spectrum() {
    for n in [5usize, 7] {
        let lat = chain(n);
        let j = mhz(-9.0);
        let b = enumerate_sector(&lat, 1).unwrap();
        let h = build_hamiltonian(&lat, &vec![0.0; n], &b).unwrap();
        let es = eigensolve_sector(&h).unwrap();
        let mut expect: Vec<f64> = (1..=n)
            .map(|k| 2.0 * j * (std::f64::consts::PI * k as f64 / (n as f64 + 1.0)).cos())
            .collect();
        expect.sort_by(f64::total_cmp);
        for (e, x) in es.values.iter().zip(&expect) {
            assert!((e - x).abs() <= 1e-9 * j.abs(), "{e} vs {x}");
        }
    }
}

#[test]
fn detuning_mismatch_is_rejected() {
    let lat = chain(4);
    let b = enumerate_sector(&lat, 2).unwrap();
    assert!(build_hamiltonian(&lat, &[0.0; 3], &b).is_err());
}

#[test]
fn densities_of_simple_states() {
    let reg = SectorRegistry::new(chain(7)).unwrap();
    let psi = CompositeState::from_occupations(&reg, &[1, 1, 1, 0, 0, 0, 0]).unwrap();
    assert_eq!(density_expectation(&psi, &reg), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);

    let reg2 = SectorRegistry::new(chain(2)).unwrap();
    let l = CompositeState::from_occupations(&reg2, &[1, 0]).unwrap();
    let r = CompositeState::from_occupations(&reg2, &[0, 1]).unwrap();
    let mut sup = l.clone();
    sup.add_scaled(C64::new(1.0, 0.0), &r);
    sup.normalize();
    let d = density_expectation(&sup, &reg2);
    assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(fidelity(&sup, &l), 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(fidelity(&l, &r), 0.0);
}

#[test]
fn hard_core_fluid_density() {
    // At U/|J| = 1e3 with attractive U the five doublon states sit far below
    // the hard-core band; the lowest hard-core state fills modes 1 and 2.
    let j = mhz(-9.0);
    let lat = LatticeSpec::uniform(5, j, -1e3 * j.abs(), 2).unwrap();
    let reg = SectorRegistry::new(lat.clone()).unwrap();
    let h = build_hamiltonian(&lat, &[0.0; 5], reg.basis(2)).unwrap();
    let es = eigensolve_sector(&h).unwrap();
    let mut psi = CompositeState::new();
    psi.set_sector(2, es.vector(5));
    let d = density_expectation(&psi, &reg);
    let oracle = fluid_density(&FreeFermionChain::uniform(5, j), &[1, 2]).unwrap();
    for ((x, y), z) in d.iter().zip(&oracle).zip([1.0 / 3.0, 0.5, 1.0 / 3.0, 0.5, 1.0 / 3.0]) {
        assert!((x - y).abs() < 1e-3, "{d:?}");
        assert_abs_diff_eq!(*y, z, epsilon = 1e-12);
    }
}

proptest! {
    #[test]
    fn dimensions_match_brute_force(n_sites in 2usize..7, n_max in 1u8..4, frac in 0.0f64..1.0) {
        let lat = LatticeSpec::uniform(n_sites, 1.0, -10.0, n_max).unwrap();
        let n = (frac * (n_sites * n_max as usize) as f64).round() as usize;
        prop_assert_eq!(enumerate_sector(&lat, n).unwrap().dim(), brute_force_dim(n_sites, n_max, n));
    }

    #[test]
    fn hamiltonian_is_hermitian(
        j in prop::collection::vec(-20.0f64..20.0, 4),
        u in prop::collection::vec(-300.0f64..0.0, 5),
        d in prop::collection::vec(-300.0f64..300.0, 5),
        n in 0usize..=10,
    ) {
        let lat = LatticeSpec::new(j.iter().map(|x| mhz(*x)).collect(), u.iter().map(|x| mhz(*x)).collect(), 2).unwrap();
        let b = enumerate_sector(&lat, n).unwrap();
        let h = build_hamiltonian(&lat, &d.iter().map(|x| mhz(*x)).collect::<Vec<_>>(), &b).unwrap();
        let scale = mhz(300.0);
        prop_assert!(h.hermiticity_error() <= 1e-12 * scale);
        for (r, c, _) in h.entries() {
            prop_assert!(r < b.dim() && c < b.dim());
        }
    }
}
