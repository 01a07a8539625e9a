//! Random CRUD sequences checked against a reference model of the registry.

use std::collections::BTreeMap;
use std::path::Path;

use pipeforge_core::registry::{
    Application, CiEngine, CiPipeline, Entity, EntityKind, ListFilter, Registry, RegistryError,
    RegistryStore, Repository, Requirements,
};
use pipeforge_core::Engine;
use proptest::prelude::*;

const NAMES: [&str; 4] = ["alpha", "beta", "gamma", ""];
const COVERAGE: [f64; 5] = [0.0, 42.5, 100.0, 100.5, -1.0];
const DIGESTS: [Option<&str>; 3] = [
    None,
    Some("28c2d1809e6186bffb0739ef1cceda6761f06bab8aa8280b65fad1765f1aa4d6"),
    Some("not-hex"),
];

#[derive(Debug, Clone)]
pub struct Fields {
    kind: u8,
    name: u8,
    refs: Vec<u8>,
    coverage: u8,
    digest: u8,
    template_empty: bool,
}

#[derive(Debug, Clone)]
pub enum Op {
    Create(Fields),
    Update(u8, Fields),
    Delete(u8),
}

fn fields() -> impl Strategy<Value = Fields> {
    (
        0u8..4,
        0u8..4,
        prop::collection::vec(any::<u8>(), 0..3),
        0u8..5,
        0u8..3,
        prop::bool::weighted(0.1),
    )
        .prop_map(|(kind, name, refs, coverage, digest, template_empty)| Fields {
            kind,
            name,
            refs,
            coverage,
            digest,
            template_empty,
        })
}

pub fn ops() -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        4 => fields().prop_map(Op::Create),
        2 => (any::<u8>(), fields()).prop_map(|(t, f)| Op::Update(t, f)),
        2 => any::<u8>().prop_map(Op::Delete),
    ];
    prop::collection::vec(op, 1..40)
}

const KINDS: [EntityKind; 4] = [
    EntityKind::Application,
    EntityKind::Repository,
    EntityKind::CiEngine,
    EntityKind::CiPipeline,
];

fn prefix(kind: EntityKind) -> &'static str {
    match kind {
        EntityKind::Application => "app",
        EntityKind::Repository => "repo",
        EntityKind::CiEngine => "engine",
        EntityKind::CiPipeline => "pipeline",
    }
}

#[derive(Default)]
struct Model {
    next: u64,
    entities: BTreeMap<String, Entity>,
}

impl Model {
    fn ids_of(&self, kind: EntityKind) -> Vec<String> {
        self.entities
            .iter()
            .filter(|(_, e)| e.kind() == kind)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Existing id of `kind` or, when `pick` lands past the end, a missing one.
    fn pick_ref(&self, kind: EntityKind, pick: u8) -> String {
        let ids = self.ids_of(kind);
        let slot = pick as usize % (ids.len() + 1);
        ids.get(slot)
            .cloned()
            .unwrap_or_else(|| format!("{}-{}", prefix(kind), 90_000 + pick as u64))
    }

    fn refs_of(entity: &Entity) -> Vec<(EntityKind, String)> {
        match entity {
            Entity::Application(a) => a
                .repository_ids
                .iter()
                .map(|r| (EntityKind::Repository, r.clone()))
                .collect(),
            Entity::Repository(r) => r
                .engine_id
                .iter()
                .map(|e| (EntityKind::CiEngine, e.clone()))
                .chain(r.application_id.iter().map(|a| (EntityKind::Application, a.clone())))
                .collect(),
            Entity::CiEngine(_) => vec![],
            Entity::CiPipeline(p) => vec![
                (EntityKind::Repository, p.repository_id.clone()),
                (EntityKind::CiEngine, p.engine_id.clone()),
            ],
        }
    }

    fn resolves(&self, kind: EntityKind, id: &str) -> bool {
        self.entities.get(id).is_some_and(|e| e.kind() == kind)
    }

    fn name_of(entity: &Entity) -> Option<&str> {
        match entity {
            Entity::Application(a) => Some(&a.name),
            Entity::Repository(r) => Some(&r.name),
            Entity::CiEngine(e) => Some(&e.name),
            Entity::CiPipeline(_) => None,
        }
    }

    fn build(&self, f: &Fields, id: String) -> Entity {
        let kind = KINDS[f.kind as usize % 4];
        let name = NAMES[f.name as usize % 4].to_string();
        let r = |i: usize, kind: EntityKind| self.pick_ref(kind, f.refs.get(i).copied().unwrap_or(0));
        match kind {
            EntityKind::Application => Entity::Application(Application {
                id,
                name,
                requirements: Requirements {
                    lint_required: f.name.is_multiple_of(2),
                    coverage_target: COVERAGE[f.coverage as usize % 5],
                    security_scan_required: f.digest == 1,
                },
                repository_ids: (0..f.refs.len())
                    .map(|i| r(i, EntityKind::Repository))
                    .collect(),
            }),
            EntityKind::Repository => Entity::Repository(Repository {
                id,
                name,
                location: format!("/src/{}", f.coverage),
                languages: vec!["Go".into()],
                toolchains: vec![],
                engine_id: (!f.refs.is_empty()).then(|| r(0, EntityKind::CiEngine)),
                application_id: (f.refs.len() > 1).then(|| r(1, EntityKind::Application)),
            }),
            EntityKind::CiEngine => Entity::CiEngine(CiEngine {
                id,
                name,
                kind: if f.coverage.is_multiple_of(2) { Engine::Gitlab } else { Engine::Github },
            }),
            EntityKind::CiPipeline => Entity::CiPipeline(CiPipeline {
                id,
                repository_id: r(0, EntityKind::Repository),
                engine_id: r(1, EntityKind::CiEngine),
                template_refs: if f.template_empty {
                    vec![" ".into()]
                } else {
                    vec!["go".into(), "sast/trivy".into()]
                },
                rendered_digest: DIGESTS[f.digest as usize % 3].map(str::to_owned),
                catalog_version: "1.0".into(),
            }),
        }
    }

    /// Every error the rules allow for writing `entity`. Empty means success.
    fn write_errors(&self, entity: &Entity, id: &str) -> Vec<&'static str> {
        let mut errs = Vec::new();
        let kind = entity.kind();
        if let Some(name) = Self::name_of(entity) {
            if name.trim().is_empty() {
                errs.push("invalid");
            }
            let clash = self
                .entities
                .iter()
                .any(|(other, e)| other != id && e.kind() == kind && Self::name_of(e) == Some(name));
            if clash {
                errs.push("duplicate");
            }
        }
        if Self::refs_of(entity).iter().any(|(k, r)| !self.resolves(*k, r)) {
            errs.push("dangling");
        }
        match entity {
            Entity::Application(a) if !(0.0..=100.0).contains(&a.requirements.coverage_target) => {
                errs.push("invalid")
            }
            Entity::CiPipeline(p) => {
                if p.template_refs.iter().any(|t| t.trim().is_empty()) {
                    errs.push("invalid");
                }
                if p.rendered_digest.as_deref().is_some_and(|d| d.len() != 64) {
                    errs.push("invalid");
                }
            }
            _ => {}
        }
        errs
    }

    fn referrers(&self, id: &str) -> Vec<String> {
        self.entities
            .iter()
            .filter(|(_, e)| Self::refs_of(e).iter().any(|(_, r)| r == id))
            .map(|(owner, _)| owner.clone())
            .collect()
    }
}

fn error_tag(e: &RegistryError) -> &'static str {
    match e {
        RegistryError::NotFound(_) => "not-found",
        RegistryError::DuplicateName { .. } => "duplicate",
        RegistryError::DanglingReference { .. } => "dangling",
        RegistryError::Invalid { .. } => "invalid",
        RegistryError::ReferentialIntegrity { .. } => "referenced",
        _ => "other",
    }
}

fn sorted(mut v: Vec<Entity>) -> Vec<Entity> {
    v.sort_by(|a, b| a.id().cmp(b.id()));
    v
}

/// Runs `ops` against a fresh registry and the model; any divergence or
/// broken invariant is returned as an error message. Returns the number of
/// operations the registry accepted.
pub fn check_sequence(ops: &[Op], dir: &Path) -> Result<usize, String> {
    let mut accepted = 0;
    let mut model = Model {
        next: 1,
        ..Model::default()
    };
    let mut reg = Registry::default();

    for (step, op) in ops.iter().enumerate() {
        let ctx = |msg: String| format!("step {step} {op:?}: {msg}");
        match op {
            Op::Create(f) | Op::Update(_, f) => {
                let target = match op {
                    Op::Update(t, _) => {
                        let kind = KINDS[f.kind as usize % 4];
                        Some(model.pick_ref(kind, *t))
                    }
                    _ => None,
                };
                let id = target.clone().unwrap_or_default();
                let entity = model.build(f, id.clone());
                let expected = if target.is_some() && !model.entities.contains_key(&id) {
                    vec!["not-found"]
                } else {
                    model.write_errors(&entity, &id)
                };
                match reg.upsert(entity.clone()) {
                    Ok(new_id) => {
                        if !expected.is_empty() {
                            return Err(ctx(format!("accepted, expected one of {expected:?}")));
                        }
                        let want_id = if target.is_some() {
                            id
                        } else {
                            let kind = entity.kind();
                            let id = format!("{}-{}", prefix(kind), model.next);
                            model.next += 1;
                            id
                        };
                        if new_id != want_id {
                            return Err(ctx(format!("id {new_id}, expected {want_id}")));
                        }
                        let mut stored = entity;
                        stored = match stored {
                            Entity::Application(mut a) => { a.id = new_id.clone(); Entity::Application(a) }
                            Entity::Repository(mut r) => { r.id = new_id.clone(); Entity::Repository(r) }
                            Entity::CiEngine(mut e) => { e.id = new_id.clone(); Entity::CiEngine(e) }
                            Entity::CiPipeline(mut p) => { p.id = new_id.clone(); Entity::CiPipeline(p) }
                        };
                        if reg.get(&new_id).ok().as_ref() != Some(&stored) {
                            return Err(ctx("get after upsert differs".into()));
                        }
                        model.entities.insert(new_id, stored);
                        accepted += 1;
                    }
                    Err(e) => {
                        if !expected.contains(&error_tag(&e)) {
                            return Err(ctx(format!("error {e}, expected {expected:?}")));
                        }
                    }
                }
            }
            Op::Delete(pick) => {
                let all: Vec<String> = model.entities.keys().cloned().collect();
                let id = all
                    .get(*pick as usize % (all.len() + 1))
                    .cloned()
                    .unwrap_or_else(|| "repo-77777".into());
                let refs = model.referrers(&id);
                match reg.delete(&id) {
                    Ok(()) => {
                        if !model.entities.contains_key(&id) || !refs.is_empty() {
                            return Err(ctx(format!("deleted {id} despite {refs:?}")));
                        }
                        model.entities.remove(&id);
                        accepted += 1;
                    }
                    Err(RegistryError::ReferentialIntegrity { referrers, .. }) => {
                        if referrers != refs || refs.is_empty() {
                            return Err(ctx(format!("referrers {referrers:?}, expected {refs:?}")));
                        }
                    }
                    Err(RegistryError::NotFound(_)) if !model.entities.contains_key(&id) => {}
                    Err(e) => return Err(ctx(format!("unexpected {e}"))),
                }
            }
        }

        if !reg.dangling_references().is_empty() {
            return Err(ctx(format!("dangling {:?}", reg.dangling_references())));
        }
        for kind in KINDS {
            let actual = sorted(reg.list(kind, &ListFilter::default()));
            let expected: Vec<Entity> = sorted(
                model.entities.values().filter(|e| e.kind() == kind).cloned().collect(),
            );
            if actual != expected {
                return Err(ctx(format!("{kind} listing diverged")));
            }
        }
    }

    let store = RegistryStore::new(dir.join("registry.json"));
    let lock = store.lock().map_err(|e| e.to_string())?;
    store.save(&lock, &reg).map_err(|e| e.to_string())?;
    drop(lock);
    let loaded = store.load().map_err(|e| e.to_string())?;
    if loaded != reg {
        return Err("save/load round-trip changed the registry".into());
    }
    Ok(accepted)
}
