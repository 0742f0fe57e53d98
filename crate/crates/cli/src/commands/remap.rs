use std::path::Path;

use ulfsynth_core::labelharm::{builtin_schemes, load_manifest, remap, save_manifest, LabelScheme};
use ulfsynth_core::volgrid::{read_labels, write_labels};

use crate::{create_dir, CliError, Outcome, RemapArgs};

pub(crate) fn scheme(name: &str, mapping: Option<&Path>) -> Result<LabelScheme, CliError> {
    let builtin = builtin_schemes();
    let base = builtin
        .by_name(name)
        .ok_or_else(|| CliError::Config(format!("unknown scheme `{name}` (expected lisa or lisa_plus)")))?;
    Ok(match mapping {
        Some(p) => base.with_mapping_csv(p)?,
        None => base.clone(),
    })
}

pub fn run(args: RemapArgs) -> Result<Outcome, CliError> {
    let scheme = scheme(&args.scheme, args.mapping.as_deref())?;
    if let (Some(input), Some(output)) = (&args.input, &args.output) {
        let labels = read_labels(input)?;
        write_labels(&remap(&labels, &scheme), output)?;
        return Ok(Outcome::Complete);
    }
    let (Some(manifest_path), Some(out)) = (&args.manifest, &args.out) else {
        return Err(CliError::Config("remap needs --input/--output or --manifest/--out".into()));
    };
    let mut manifest = load_manifest(manifest_path)?;
    let original = manifest.clone();
    let absolute = |p: &str| {
        let r = original.resolve(p);
        std::path::absolute(&r).unwrap_or(r).to_string_lossy().into_owned()
    };
    create_dir(out)?;
    let mut failed = 0;
    for e in &mut manifest.entries {
        let variant = serde_json::to_value(e.gt_variant).expect("variant serializes");
        let name = format!("{}_{}.nii.gz", e.subject_id, variant.as_str().unwrap_or("GT"));
        match read_labels(original.resolve(&e.label_path)).and_then(|l| write_labels(&remap(&l, &scheme), out.join(&name))) {
            Ok(()) => e.label_path = name,
            Err(err) => {
                tracing::error!(subject = %e.subject_id, error = %err, "remap failed");
                e.label_path = absolute(&e.label_path);
                failed += 1;
            }
        }
        e.image_path = absolute(&e.image_path);
        e.prediction_path = e.prediction_path.as_deref().map(absolute);
    }
    save_manifest(&manifest, out.join("manifest.json"))?;
    Ok(Outcome::from_failures(failed))
}
