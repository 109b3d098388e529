macro_rules! example {
    ($module:ident, $file:literal, $test:ident) => {
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $test() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(frft_basics, "frft_basics.rs", frft_basics_runs);
example!(forecast_pipeline, "forecast_pipeline.rs", forecast_pipeline_runs);
example!(train_forecaster, "train_forecaster.rs", train_forecaster_runs);
example!(transformation_ablation, "transformation_ablation.rs", transformation_ablation_runs);
example!(alpha_sweep, "alpha_sweep.rs", alpha_sweep_runs);
example!(filter_sweep, "filter_sweep.rs", filter_sweep_runs);
example!(spectrum_analysis, "spectrum_analysis.rs", spectrum_analysis_runs);
example!(gradient_check, "gradient_check.rs", gradient_check_runs);
example!(cli_config, "cli_config.rs", cli_config_runs);
