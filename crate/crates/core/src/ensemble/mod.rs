//! Voxel-wise majority-vote label fusion and ensemble recipes.

mod recipe;
mod vote;

pub use recipe::{
    run_recipe, EnsembleRecipe, RecipeBook, RecipeMember, RecipeRun, SubjectError,
    ENSEMBLE_PROVENANCE_FILE,
};
pub use vote::{majority_vote, vote, TieBreak};
