use ulfsynth_core::ensemble::{run_recipe, RecipeBook};
use ulfsynth_core::labelharm::load_manifest;

use crate::{resolve_config, CliError, EnsembleArgs, Outcome};

pub fn run(args: EnsembleArgs) -> Result<Outcome, CliError> {
    let path = resolve_config(args.recipe.as_deref(), "ensemble.toml")?
        .ok_or_else(|| CliError::Config("no recipe book given (--recipe) and none in the config dir".into()))?;
    let book = RecipeBook::load(&path)?;
    book.get(&args.name)?;
    let manifest = load_manifest(&args.manifest)?;
    let run = run_recipe(&book, &args.name, &manifest, &args.out)?;
    for e in &run.errors {
        tracing::error!(subject = %e.subject_id, "{}", e.message);
    }
    tracing::info!(recipe = %run.recipe, fused = run.outputs.len(), failed = run.errors.len(), "ensemble finished");
    Ok(Outcome::from_failures(run.errors.len()))
}
