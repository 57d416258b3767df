use hct_core::wsi::{write_manifest_slide, write_tiled_tiff, SyntheticSlide, SyntheticSlideParams};
use serde_json::json;

use super::print_summary;
use crate::args::SynthSlideArgs;
use crate::error::CliError;

pub fn run(args: SynthSlideArgs) -> Result<(), CliError> {
    let mut params = SyntheticSlideParams { seed: args.seed, width: args.width, height: args.height, ..Default::default() };
    if let Some(roi) = args.roi {
        params.roi_fraction = roi;
    }
    if let Some(occupancy) = args.occupancy {
        params.occupancy = occupancy;
    }
    // validate through the URI parser so bad values are errors, not panics
    let uri = format!(
        "{}?width={}&height={}&roi={}&occupancy={}",
        params.seed, params.width, params.height, params.roi_fraction, params.occupancy
    );
    let params = SyntheticSlideParams::from_uri_body(&uri)?;
    let slide = SyntheticSlide::new(params);

    let is_tiff = args.out.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("tif") || e.eq_ignore_ascii_case("tiff"));
    if is_tiff {
        if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        write_tiled_tiff(&args.out, &slide, args.tile_px)?;
    } else {
        write_manifest_slide(&args.out, &format!("synthetic-{}", args.seed), &slide, args.tile_px)?;
    }
    print_summary(&json!({"out": args.out, "width": args.width, "height": args.height, "format": if is_tiff { "tiff" } else { "manifest" }}))
}
