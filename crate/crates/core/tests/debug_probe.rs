// temporary debug probe
use kinetic_fp::assembly::*;
use kinetic_fp::infsup::compute_beta;
use kinetic_fp::problems::ProblemSpec;
use kinetic_fp::sparse::EigOptions;

#[test]
fn debug_beta_table2_n16() {
    for (d, c, n, want) in [(0.4, 1.0, 16usize, 0.40915), (0.1, 1.0, 16, 0.11688), (0.1, 0.1, 16, 0.10585)] {
        let p = ProblemSpec::stationary(c, d, n, n);
        let t0 = std::time::Instant::now();
        let disc = Discretization::build(&p).unwrap();
        let sys = assemble_all(&disc).unwrap();
        let t_asm = t0.elapsed().as_secs_f64();
        let out = compute_beta(&sys.b, &sys.m_x, &sys.m_y, &EigOptions::default()).unwrap();
        println!(
            "d={d} c={c} n={n}: beta={:.5} (paper {want}), rel dev {:.2e}, N={}, nnz={}, asm {t_asm:.1}s total {:.0}s iters {}",
            out.beta,
            (out.beta - want).abs() / want,
            disc.n_unknowns(),
            sys.b.nnz(),
            t0.elapsed().as_secs_f64(),
            out.iterations,
        );
    }
}
