use std::sync::OnceLock;

use proptest::prelude::*;
use slipflow::eigen::KernelProjector;
use slipflow::io::{checkpoint_bytes, read_checkpoint, RunConfig};
use slipflow::laws::{BoundaryLaw, BoundaryModel, ConstitutiveLaw, StressModel};
use slipflow::spectrum::{korn_constant, solve_eigenbasis, StokesBasis};
use slipflow::{build_disk_mesh, build_spaces, DiscreteSystem, VectorField};

struct Fixture {
    sys: DiscreteSystem,
    basis: StokesBasis,
    kernel: KernelProjector,
    korn: f64,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let sys = build_spaces(&build_disk_mesh(2, 1.0).unwrap(), 0.8, 1.3).unwrap();
        let basis = solve_eigenbasis(&sys, 12, 4).unwrap();
        let kernel = KernelProjector::new(&sys.b_div).unwrap();
        let korn = korn_constant(&sys, 4).unwrap();
        Fixture { sys, basis, kernel, korn }
    })
}

fn field(seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let n = fixture().sys.ndof();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn abs_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y).abs()).sum()
}

fn sym(a: f64, b: f64, c: f64) -> [[f64; 2]; 2] {
    [[a, b], [b, c]]
}

fn ddot(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| a[i][j] * b[i][j]).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convection_is_skew(su in any::<u64>(), sv in any::<u64>()) {
        let sp = &fixture().sys.space;
        let (u, v) = (field(su), field(sv));
        let n = sp.convection_apply(&u, &v);
        prop_assert!(dot(&v, &n).abs() <= 1e-12 * abs_dot(&v, &n));
    }

    #[test]
    fn convection_jacobian_matches_bilinear_form(su in any::<u64>(), sw in any::<u64>()) {
        let sp = &fixture().sys.space;
        let (u, w) = (field(su), field(sw));
        let j = sp.convection_jacobian(&u, true).matvec(&w);
        let a = sp.convection_apply(&w, &u);
        let b = sp.convection_apply(&u, &w);
        let scale = a.iter().chain(&b).fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..j.len() {
            prop_assert!((j[i] - a[i] - b[i]).abs() <= 1e-12 * scale);
        }
        let dropped = sp.convection_jacobian(&u, false).matvec(&w);
        for i in 0..j.len() {
            prop_assert!((dropped[i] - b[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn projector_contracts_and_is_idempotent(s in any::<u64>(), n in 1usize..=12) {
        let f = fixture();
        let u = f.kernel.project(&field(s));
        let p = f.basis.project(&f.sys, &u, n).unwrap();
        prop_assert!(f.sys.h_norm_sq(&p) <= f.sys.h_norm_sq(&u) * (1.0 + 1e-12));
        prop_assert!(f.sys.v_norm_sq(&p) <= f.sys.v_norm_sq(&u) * (1.0 + 1e-12));
        let pp = f.basis.project(&f.sys, &p, n).unwrap();
        let d: Vec<f64> = pp.iter().zip(&p).map(|(a, b)| a - b).collect();
        prop_assert!(f.sys.h_norm_sq(&d).sqrt() <= 1e-10 * f.sys.h_norm_sq(&p).sqrt().max(1e-300));
    }

    #[test]
    fn kernel_projection_is_divergence_free(s in any::<u64>()) {
        let f = fixture();
        let u = f.kernel.project(&field(s));
        let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(f.sys.b_div.matvec(&u).iter().all(|x| x.abs() <= 1e-10 * scale));
    }

    #[test]
    fn korn_inequality(s in any::<u64>()) {
        let f = fixture();
        let u = field(s);
        let ell = f.sys.ell();
        let lhs = f.sys.grad.bilinear(&u, &u) + f.sys.m_omega.bilinear(&u, &u) / (ell * ell);
        let rhs = f.sys.k_d.bilinear(&u, &u) + f.sys.m_boundary.bilinear(&u, &u) / ell;
        prop_assert!(lhs <= f.korn * rhs * (1.0 + 1e-8));
    }

    #[test]
    fn stress_is_strongly_monotone(
        d in (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64),
        e in (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64),
        nu in 0.1..3.0f64,
    ) {
        let (d, e) = (sym(d.0, d.1, d.2), sym(e.0, e.1, e.2));
        for model in [StressModel::Linear, StressModel::ExpThinning] {
            let law = ConstitutiveLaw::new(model, nu);
            let (sd, se) = (law.stress(&d), law.stress(&e));
            let diff = [[d[0][0] - e[0][0], d[0][1] - e[0][1]], [d[1][0] - e[1][0], d[1][1] - e[1][1]]];
            let sdiff = [[sd[0][0] - se[0][0], sd[0][1] - se[0][1]], [sd[1][0] - se[1][0], sd[1][1] - se[1][1]]];
            let n2 = ddot(&diff, &diff);
            prop_assert!(ddot(&sdiff, &diff) >= law.c1 * n2 * (1.0 - 1e-10));
            let tangent = law.stress_derivative(&d, &e);
            prop_assert!(ddot(&tangent, &e) >= law.c1 * ddot(&e, &e) * (1.0 - 1e-10));
        }
    }

    #[test]
    fn stress_derivative_matches_difference_quotient(
        d in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64),
        e in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
    ) {
        let (d, e) = (sym(d.0, d.1, d.2), sym(e.0, e.1, e.2));
        let h = 1e-6;
        for model in [StressModel::Linear, StressModel::ExpThinning, StressModel::Quadratic] {
            let law = ConstitutiveLaw::new(model, 1.3);
            let plus = law.stress(&[[d[0][0] + h * e[0][0], d[0][1] + h * e[0][1]], [d[1][0] + h * e[1][0], d[1][1] + h * e[1][1]]]);
            let minus = law.stress(&[[d[0][0] - h * e[0][0], d[0][1] - h * e[0][1]], [d[1][0] - h * e[1][0], d[1][1] - h * e[1][1]]]);
            let exact = law.stress_derivative(&d, &e);
            for i in 0..2 {
                for j in 0..2 {
                    let fd = (plus[i][j] - minus[i][j]) / (2.0 * h);
                    prop_assert!((fd - exact[i][j]).abs() <= 1e-6 * (1.0 + exact[i][j].abs()));
                }
            }
        }
    }

    #[test]
    fn boundary_law_derivative_is_coercive(
        u in (-10.0..10.0f64, -10.0..10.0f64),
        v in (-1.0..1.0f64, -1.0..1.0f64),
        alpha in 0.1..4.0f64,
    ) {
        let (u, v) = ([u.0, u.1], [v.0, v.1]);
        for model in [BoundaryModel::Linear, BoundaryModel::Tanh] {
            let law = BoundaryLaw::new(model, alpha);
            let j = law.derivative(u);
            let q = v[0] * (j[0][0] * v[0] + j[0][1] * v[1]) + v[1] * (j[1][0] * v[0] + j[1][1] * v[1]);
            prop_assert!(q >= law.c5 * alpha * (v[0] * v[0] + v[1] * v[1]));
        }
    }

    #[test]
    fn rescaled_field_is_composition(
        amp in -5.0..5.0f64,
        k in 0.5..4.0f64,
        factor in 0.1..10.0f64,
        length in 0.2..5.0f64,
        x in (-1.0..1.0f64, -1.0..1.0f64),
    ) {
        let fields = [
            VectorField::TrigVortex { amp, k },
            VectorField::Rotation { amp },
            VectorField::Constant { value: [amp, -k] },
            VectorField::Affine { a: [[amp, k], [-k, 0.5]], b: [1.0, amp] },
        ];
        for f in fields {
            let g = f.rescaled(factor, length).eval([x.0, x.1]);
            let base = f.eval([length * x.0, length * x.1]);
            for i in 0..2 {
                prop_assert!((g[i] - factor * base[i]).abs() <= 1e-12 * (1.0 + (factor * base[i]).abs()));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip(state in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..64), t in 0.0..100.0f64) {
        let cfg = RunConfig::default();
        let bytes = checkpoint_bytes(&cfg, t, &state);
        let (t2, s2) = read_checkpoint(&cfg, &bytes).unwrap();
        prop_assert_eq!(t2, t);
        prop_assert_eq!(s2, state);
    }
}

#[test]
fn mesh_text_round_trip() {
    for level in 0..=3 {
        let mesh = build_disk_mesh(level, 1.7).unwrap();
        let text = mesh.to_text().unwrap();
        let back = slipflow::Mesh::from_text(&text).unwrap();
        assert_eq!(back.to_text().unwrap(), text);
    }
}
