//! Runs the Rust snippets in `book/src` as doc-tests, one module per
//! chapter so a failure points at its chapter.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(energy, "energy.md");
chapter!(seam_carving, "seam-carving.md");
chapter!(segmentation, "segmentation.md");
chapter!(warping, "warping.md");
chapter!(video, "video.md");
chapter!(fields, "fields.md");
chapter!(metrics, "metrics.md");
chapter!(cli, "cli.md");

#[doc = include_str!("../../../README.md")]
pub mod readme {}
