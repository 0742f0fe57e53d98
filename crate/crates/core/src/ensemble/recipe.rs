use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::vote::{majority_vote, TieBreak};
use crate::labelharm::Manifest;
use crate::volgrid::{read_labels, write_labels, LabelMap};
use crate::{Error, Result};

/// A model's predictions (`path` contains `{subject_id}`) or the output of
/// another recipe in the same file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum RecipeMember {
    Model { model: String, path: String },
    Recipe { recipe: String },
}

impl RecipeMember {
    pub fn describe(&self) -> String {
        match self {
            RecipeMember::Model { model, path } => format!("{model} ({path})"),
            RecipeMember::Recipe { recipe } => format!("recipe {recipe}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleRecipe {
    pub name: String,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Ordered: earlier members win `first_member` ties.
    pub members: Vec<RecipeMember>,
}

/// Recipes from one TOML file (`[[recipe]]` tables).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecipeBook {
    #[serde(rename = "recipe", default)]
    pub recipes: Vec<EnsembleRecipe>,
    /// Relative member paths resolve against this directory.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RecipeBook {
    pub fn from_toml(text: &str) -> Result<Self> {
        let book: Self = toml::from_str(text).map_err(|e| Error::Parse {
            location: e
                .span()
                .map(|s| format!("line {}", text[..s.start.min(text.len())].lines().count().max(1)))
                .unwrap_or_else(|| "recipe file".into()),
            message: e.message().to_string(),
        })?;
        book.validate()?;
        Ok(book)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut book = Self::from_toml(&text)?;
        book.base_dir = path.parent().map(Path::to_path_buf);
        Ok(book)
    }

    pub fn get(&self, name: &str) -> Result<&EnsembleRecipe> {
        self.recipes
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Config(format!("no recipe named `{name}`")))
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for r in &self.recipes {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Config(format!("duplicate recipe `{}`", r.name)));
            }
            if r.members.len() < 2 {
                return Err(Error::Config(format!("recipe `{}` needs at least 2 members", r.name)));
            }
            for m in &r.members {
                if let RecipeMember::Model { path, .. } = m {
                    if !path.contains("{subject_id}") {
                        return Err(Error::Config(format!(
                            "recipe `{}`: member path `{path}` lacks {{subject_id}}",
                            r.name
                        )));
                    }
                }
            }
        }
        for r in &self.recipes {
            for m in &r.members {
                if let RecipeMember::Recipe { recipe } = m {
                    if !names.contains(recipe.as_str()) {
                        return Err(Error::Config(format!(
                            "recipe `{}` references unknown recipe `{recipe}`",
                            r.name
                        )));
                    }
                }
            }
        }
        for r in &self.recipes {
            self.check_acyclic(&r.name, &mut Vec::new())?;
        }
        Ok(())
    }

    fn check_acyclic<'a>(&'a self, name: &'a str, stack: &mut Vec<&'a str>) -> Result<()> {
        if stack.contains(&name) {
            return Err(Error::Config(format!("recipe cycle through `{name}`")));
        }
        stack.push(name);
        if let Ok(r) = self.get(name) {
            for m in &r.members {
                if let RecipeMember::Recipe { recipe } = m {
                    self.check_acyclic(recipe, stack)?;
                }
            }
        }
        stack.pop();
        Ok(())
    }

    pub fn member_path(&self, pattern: &str, subject_id: &str) -> PathBuf {
        let p = PathBuf::from(pattern.replace("{subject_id}", subject_id));
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p,
        }
    }

    /// Fuses one subject, evaluating nested recipes in memory.
    pub fn fuse_subject(&self, name: &str, subject_id: &str) -> Result<LabelMap> {
        self.fuse_cached(name, subject_id, &mut HashMap::new())
    }

    fn fuse_cached(&self, name: &str, subject_id: &str, cache: &mut HashMap<String, LabelMap>) -> Result<LabelMap> {
        if let Some(m) = cache.get(name) {
            return Ok(m.clone());
        }
        let recipe = self.get(name)?;
        let maps = recipe
            .members
            .iter()
            .map(|m| match m {
                RecipeMember::Model { model, path } => {
                    let p = self.member_path(path, subject_id);
                    read_labels(&p).map_err(|e| {
                        Error::Validation(format!("member {model}: {e}"))
                    })
                }
                RecipeMember::Recipe { recipe } => self.fuse_cached(recipe, subject_id, cache),
            })
            .collect::<Result<Vec<_>>>()?;
        let fused = majority_vote(&maps, recipe.tie_break)?;
        cache.insert(name.to_string(), fused.clone());
        Ok(fused)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectError {
    pub subject_id: String,
    pub message: String,
}

/// Record written next to fused outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeRun {
    pub recipe: String,
    pub tie_break: TieBreak,
    pub members: Vec<RecipeMember>,
    pub outputs: Vec<(String, PathBuf)>,
    pub errors: Vec<SubjectError>,
}

pub const ENSEMBLE_PROVENANCE_FILE: &str = "ensemble_provenance.json";

/// Fuses every subject in `manifest` into `out_dir/<subject_id>.nii.gz`. A
/// subject whose members cannot be read becomes an error entry; the others
/// are still processed.
pub fn run_recipe(book: &RecipeBook, name: &str, manifest: &Manifest, out_dir: &Path) -> Result<RecipeRun> {
    let recipe = book.get(name)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut run = RecipeRun {
        recipe: recipe.name.clone(),
        tie_break: recipe.tie_break,
        members: recipe.members.clone(),
        outputs: Vec::new(),
        errors: Vec::new(),
    };
    for subject in manifest.subject_ids() {
        let out = out_dir.join(format!("{subject}.nii.gz"));
        match book
            .fuse_subject(name, subject)
            .and_then(|fused| write_labels(&fused, &out))
        {
            Ok(()) => run.outputs.push((subject.to_string(), out)),
            Err(e) => {
                tracing::warn!(subject, error = %e, "ensemble failed for subject");
                run.errors.push(SubjectError {
                    subject_id: subject.to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let prov = out_dir.join(ENSEMBLE_PROVENANCE_FILE);
    let text = serde_json::to_string_pretty(&run).expect("run record serializes") + "\n";
    std::fs::write(&prov, text).map_err(|e| Error::io(&prov, e))?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOOK: &str = r#"
[[recipe]]
name = "M1"
tie_break = "first_member"
members = [
  { model = "A", path = "preds/A/{subject_id}.nii.gz" },
  { model = "B", path = "preds/B/{subject_id}.nii.gz" },
  { model = "C", path = "preds/C/{subject_id}.nii.gz" },
]

[[recipe]]
name = "M4"
tie_break = "lowest_label"
members = [{ recipe = "M1" }, { recipe = "M2" }, { model = "D", path = "/abs/{subject_id}.nii" }]

[[recipe]]
name = "M2"
members = [{ model = "E", path = "e/{subject_id}.nii" }, { model = "F", path = "f/{subject_id}.nii" }]
"#;

    #[test]
    fn parses_nested_recipes() {
        let mut book = RecipeBook::from_toml(BOOK).unwrap();
        assert_eq!(book.recipes.len(), 3);
        let m4 = book.get("M4").unwrap();
        assert_eq!(m4.tie_break, TieBreak::LowestLabel);
        assert_eq!(m4.members[0], RecipeMember::Recipe { recipe: "M1".into() });
        assert_eq!(book.get("M2").unwrap().tie_break, TieBreak::FirstMember);
        book.base_dir = Some("/data".into());
        assert_eq!(book.member_path("preds/A/{subject_id}.nii.gz", "s1"), PathBuf::from("/data/preds/A/s1.nii.gz"));
        assert_eq!(book.member_path("/abs/{subject_id}.nii", "s1"), PathBuf::from("/abs/s1.nii"));
    }

    #[test]
    fn rejects_bad_books() {
        let one = "[[recipe]]\nname = \"X\"\nmembers = [{ model = \"A\", path = \"{subject_id}\" }]\n";
        assert!(matches!(RecipeBook::from_toml(one), Err(Error::Config(_))));
        let cycle = "[[recipe]]\nname = \"X\"\nmembers = [{ recipe = \"Y\" }, { recipe = \"Y\" }]\n\
                     [[recipe]]\nname = \"Y\"\nmembers = [{ recipe = \"X\" }, { recipe = \"X\" }]\n";
        assert!(RecipeBook::from_toml(cycle).unwrap_err().to_string().contains("cycle"));
        let dangling = "[[recipe]]\nname = \"X\"\nmembers = [{ recipe = \"Z\" }, { recipe = \"Z\" }]\n";
        assert!(RecipeBook::from_toml(dangling).is_err());
        let no_pattern = "[[recipe]]\nname = \"X\"\nmembers = [{ model = \"A\", path = \"a.nii\" }, { model = \"B\", path = \"b.nii\" }]\n";
        assert!(RecipeBook::from_toml(no_pattern).is_err());
        assert!(matches!(RecipeBook::from_toml("[[recipe]]\nname = "), Err(Error::Parse { .. })));
    }
}
