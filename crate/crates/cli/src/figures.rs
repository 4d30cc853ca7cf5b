use covalloc::distributions::{
    conditional_correlation_pdf, sample_shifted_gamma, scaled_inv_chi2_pdf, vol_corr_2d, volatility_pdf, RngStream,
    ShiftedGammaNoise, WishartNoiseModel,
};
use covalloc::wishart_alloc::{scaling_g_laplace, scaling_g_wishart};
use covalloc::CovMatrix;

use crate::args::{PosteriorArgs, PosteriorKind, SampleArgs, ScalingArgs, ScalingModel, WishartSimArgs};
use crate::output::Table;
use crate::{check_grid, input_error, CliResult, Common};

pub fn scaling(common: &Common, args: &ScalingArgs) -> CliResult<()> {
    check_grid("q-grid", &args.q_grid)?;
    check_grid("alpha-grid", &args.alpha_grid)?;
    if args.q_grid.iter().chain(&args.alpha_grid).any(|&v| v <= 0.0) {
        return Err(input_error("grids must be positive"));
    }
    let mut table = Table::create(common.out.as_deref(), &["q", "alpha", "g"])?;
    for &q in &args.q_grid {
        for &alpha in &args.alpha_grid {
            let g = match args.model {
                ScalingModel::Wishart => scaling_g_wishart(q, alpha)?,
                ScalingModel::Laplace => scaling_g_laplace(q)?,
            };
            table.row(&[q.into(), alpha.into(), g.into()])?;
        }
    }
    table.finish()
}

pub fn sample(common: &Common, args: &SampleArgs) -> CliResult<()> {
    let model = ShiftedGammaNoise::new(args.alpha, args.sigma * args.sigma, args.sigma_min * args.sigma_min)?;
    let draws = sample_shifted_gamma(&model, &mut RngStream::new(common.seed), args.n);
    let mut table = Table::create(common.out.as_deref(), &["sample_index", "value"])?;
    for (i, s2) in draws.into_iter().enumerate() {
        table.row(&[i.into(), s2.sqrt().into()])?;
    }
    table.finish()
}

pub fn wishart_sim(common: &Common, args: &WishartSimArgs) -> CliResult<()> {
    let cross = args.rho * args.sigma_a * args.sigma_b;
    let sigma = CovMatrix::from_rows(&[
        vec![args.sigma_a * args.sigma_a, cross],
        vec![cross, args.sigma_b * args.sigma_b],
    ])?;
    let model = WishartNoiseModel::new(args.alpha, sigma)?;
    let sampler = model.sampler()?;
    let mut rng = RngStream::new(common.seed);
    let mut table = Table::create(common.out.as_deref(), &["sample_index", "vol_a", "vol_b", "corr"])?;
    for i in 0..args.n {
        let (va, vb, corr) = vol_corr_2d(&sampler.draw(&mut rng));
        table.row(&[i.into(), va.into(), vb.into(), corr.into()])?;
    }
    table.finish()
}

pub fn posterior(common: &Common, args: &PosteriorArgs) -> CliResult<()> {
    if args.points < 2 {
        return Err(input_error("--points must be at least 2"));
    }
    let k = args.points;
    match args.kind {
        PosteriorKind::Volatility => {
            let ns = args.n.clone().unwrap_or_else(|| vec![20, 60, 252]);
            let ss = args.s.clone().unwrap_or_else(|| vec![0.15, 0.25, 0.30]);
            check_grid("s", &ss)?;
            let mut table = Table::create(
                common.out.as_deref(),
                &["n", "s", "sigma", "variance_pdf", "volatility_pdf"],
            )?;
            for &n in &ns {
                for &s in &ss {
                    // σ on (0, 3s]
                    for i in 1..=k {
                        let sigma = 3.0 * s * i as f64 / k as f64;
                        let var_pdf = scaled_inv_chi2_pdf(sigma * sigma, n, s * s)?;
                        let vol_pdf = volatility_pdf(sigma, n, s)?;
                        table.row(&[n.into(), s.into(), sigma.into(), var_pdf.into(), vol_pdf.into()])?;
                    }
                }
            }
            table.finish()
        }
        PosteriorKind::Correlation => {
            let ns = args.n.clone().unwrap_or_else(|| vec![20, 60, 120]);
            let rs = args.r.clone().unwrap_or_else(|| vec![0.2, 0.5, 0.8]);
            check_grid("r", &rs)?;
            let mut table = Table::create(common.out.as_deref(), &["n", "r", "rho", "pdf"])?;
            for &n in &ns {
                for &r in &rs {
                    // cell midpoints of (−1, 1)
                    for i in 0..k {
                        let rho = -1.0 + 2.0 * (i as f64 + 0.5) / k as f64;
                        let pdf = conditional_correlation_pdf(rho, r, n)?;
                        table.row(&[n.into(), r.into(), rho.into(), pdf.into()])?;
                    }
                }
            }
            table.finish()
        }
    }
}
