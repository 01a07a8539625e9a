mod support;

use std::collections::BTreeSet;

use pipeforge_core::inference::{PlanError, SCA_TARGET_PARAM};
use pipeforge_core::scanner::{IacKind, Manifest, TestEvidence};
use pipeforge_core::{plan_pipeline, scan_repository, FactSet, PipelinePlan, PlanPolicy, ScanConfig, Stage};
use proptest::prelude::*;
use support::*;

fn ids(plan: &PipelinePlan) -> Vec<&str> {
    plan.jobs.iter().map(|j| j.id.as_str()).collect()
}

fn plan(facts: &FactSet) -> PipelinePlan {
    plan_pipeline(facts, &fixture_catalog(), &PlanPolicy::default()).unwrap()
}

#[test]
fn go_service_golden_path() {
    let facts = scan_repository(&fixtures().join("go-service"), &ScanConfig::default()).unwrap();
    let plan = plan(&facts);
    assert_eq!(
        ids(&plan),
        [
            "go-build-1-x",
            "go-lint-vet",
            "go-lint-staticcheck",
            "go-test-make-test",
            "sast-trivy",
            "sca-go-mod"
        ]
    );
    assert_eq!(
        plan.stages,
        [Stage::Build, Stage::Lint, Stage::Test, Stage::Sast, Stage::Sca]
    );
    assert_eq!(plan.catalog_version, "1.0");
    assert_eq!(plan.source_facts, facts.digest());
    assert!(plan.diagnostics.is_empty());
    let sca = plan.jobs.last().unwrap();
    assert_eq!(sca.block.path, "sca/dependency-scan");
    assert_eq!(sca.params[SCA_TARGET_PARAM], "go.mod");
    assert_eq!(plan.jobs[0].params["go_version"], "1.22");
}

#[test]
fn python_without_tests_gets_no_test_job() {
    let facts = scan_repository(&fixtures().join("python-lib"), &ScanConfig::default()).unwrap();
    assert!(facts.tests.is_empty());
    assert_eq!(
        ids(&plan(&facts)),
        ["python-lint-pylint-2-17", "python-lint-flake8", "sast-trivy", "sca-requirements-txt"]
    );
}

#[test]
fn terraform_only_is_a_single_sast_job() {
    let facts = scan_repository(&fixtures().join("infra"), &ScanConfig::default()).unwrap();
    let plan = plan(&facts);
    assert_eq!(ids(&plan), ["sast-tfsec"]);
    assert_eq!(plan.stages, [Stage::Sast]);
    assert!(plan.diagnostics.is_empty());
}

#[test]
fn empty_facts_give_empty_plan_with_diagnostic() {
    let plan = plan(&FactSet::default());
    assert!(plan.jobs.is_empty());
    assert!(plan.stages.is_empty());
    assert_eq!(plan.diagnostics, ["no golden path matched"]);
}

#[test]
fn unknown_language_is_diagnostic_unless_strict() {
    let facts = Facts::new().lang("COBOL", 2).build();
    let lenient = plan(&facts);
    assert!(lenient.jobs.is_empty());
    assert!(lenient.diagnostics.iter().any(|d| d.contains("COBOL")));

    let strict = PlanPolicy {
        strict: true,
        ..PlanPolicy::default()
    };
    match plan_pipeline(&facts, &fixture_catalog(), &strict) {
        Err(PlanError::NoCatalogGroup(lang)) => assert_eq!(lang, "COBOL"),
        other => panic!("expected NoCatalogGroup, got {other:?}"),
    }
}

#[test]
fn single_sca_job_when_not_per_manifest() {
    let facts = Facts::new()
        .manifest(Manifest::GoMod)
        .manifest(Manifest::RequirementsTxt)
        .build();
    let policy = PlanPolicy {
        sca_per_manifest: false,
        ..PlanPolicy::default()
    };
    let plan = plan_pipeline(&facts, &fixture_catalog(), &policy).unwrap();
    assert_eq!(ids(&plan), ["sca-dependency-scan"]);
    assert_eq!(plan.jobs[0].params[SCA_TARGET_PARAM], ".");
}

#[test]
fn default_params_apply_by_name() {
    let facts = Facts::new().lang("Go", 1).build();
    let mut policy = PlanPolicy::default();
    policy.default_params.insert("go_version".into(), "1.23".into());
    policy.default_params.insert("unused".into(), "x".into());
    let plan = plan_pipeline(&facts, &fixture_catalog(), &policy).unwrap();
    assert_eq!(plan.jobs[0].params["go_version"], "1.23");
    assert!(plan.jobs.iter().all(|j| !j.params.contains_key("unused")));
}

#[test]
fn manifest_override_beats_default_params() {
    let facts = Facts::new().manifest(Manifest::PomXml).build();
    let mut policy = PlanPolicy::default();
    policy.default_params.insert(SCA_TARGET_PARAM.into(), "elsewhere".into());
    let plan = plan_pipeline(&facts, &fixture_catalog(), &policy).unwrap();
    assert_eq!(plan.jobs[0].params[SCA_TARGET_PARAM], "pom.xml");
}

#[test]
fn excluded_stages_are_dropped() {
    let facts = Facts::new().lang("Go", 1).test(TestEvidence::MakeTest).build();
    let policy = PlanPolicy {
        exclude_stages: [Stage::Lint].into(),
        ..PlanPolicy::default()
    };
    let plan = plan_pipeline(&facts, &fixture_catalog(), &policy).unwrap();
    assert_eq!(ids(&plan), ["go-build-1-x", "go-test-make-test", "sast-trivy"]);
}

#[test]
fn forbid_shell_reports_shell_blocks() {
    let facts = Facts::new().lang("Go", 1).build();
    let policy = PlanPolicy {
        forbid_shell: true,
        ..PlanPolicy::default()
    };
    let plan = plan_pipeline(&facts, &fixture_catalog(), &policy).unwrap();
    let flagged: BTreeSet<&str> = plan
        .diagnostics
        .iter()
        .filter_map(|d| d.strip_suffix(" runs shell commands on github"))
        .collect();
    assert_eq!(flagged, BTreeSet::from(["go/build/1.x", "go/lint/vet"]));
}

#[test]
fn invalid_catalog_is_rejected() {
    let mut catalog = fixture_catalog();
    catalog.groups.get_mut("go").unwrap().blocks.push("go/lint/missing".into());
    let err = plan_pipeline(&Facts::new().lang("Go", 1).build(), &catalog, &PlanPolicy::default())
        .unwrap_err();
    assert!(matches!(err, PlanError::InvalidCatalog { ref version, .. } if version == "1.0"));
}

#[test]
fn plan_yaml_round_trips() {
    let facts = scan_repository(&fixtures().join("go-service"), &ScanConfig::default()).unwrap();
    let plan = plan(&facts);
    let back: PipelinePlan = serde_yaml::from_str(&plan.to_yaml()).unwrap();
    assert_eq!(back, plan);
    assert_eq!(back.digest(), plan.digest());
}

const LANGS: [&str; 5] = ["Go", "Python", "Java", "Terraform", "Rust"];
const MANIFESTS: [Manifest; 3] = [Manifest::GoMod, Manifest::RequirementsTxt, Manifest::PomXml];

fn facts_strategy() -> impl Strategy<Value = FactSet> {
    (
        prop::collection::btree_map(prop::sample::select(LANGS.to_vec()), 1usize..9, 0..4),
        prop::collection::btree_set(prop::sample::select(MANIFESTS.to_vec()), 0..3),
        any::<bool>(),
        prop::collection::btree_set(prop::sample::select(vec!["go", "python"]), 0..2),
        any::<bool>(),
    )
        .prop_map(|(languages, manifests, make_test, native, terraform)| {
            let mut facts = FactSet::default();
            for (lang, n) in languages {
                facts.languages.insert(lang.to_string(), n);
                facts.file_count += n;
            }
            facts.manifests = manifests;
            if make_test {
                facts.make_targets.insert("test".into());
                facts.tests.insert(TestEvidence::MakeTest);
            }
            for lang in native {
                if facts.languages.keys().any(|l| l.eq_ignore_ascii_case(lang)) {
                    facts.tests.insert(TestEvidence::native(lang));
                }
            }
            if terraform {
                facts.iac.insert(IacKind::Terraform);
                *facts.languages.entry("Terraform".into()).or_insert(0) += 1;
            }
            facts
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn adding_a_manifest_adds_exactly_one_sca_job(
        facts in facts_strategy(),
        manifest in prop::sample::select(MANIFESTS.to_vec()),
    ) {
        prop_assume!(!facts.manifests.contains(&manifest));
        let catalog = fixture_catalog();
        let policy = PlanPolicy::default();
        let before = plan_pipeline(&facts, &catalog, &policy).unwrap();
        let mut more = facts.clone();
        more.manifests.insert(manifest);
        let after = plan_pipeline(&more, &catalog, &policy).unwrap();
        let new_id = format!("sca-{}", manifest.id());
        let (added, kept): (Vec<_>, Vec<_>) =
            after.jobs.iter().cloned().partition(|j| j.id == new_id);
        prop_assert_eq!(added.len(), 1);
        prop_assert_eq!(added[0].stage, Stage::Sca);
        prop_assert_eq!(kept, before.jobs);
    }

    #[test]
    fn removing_tests_removes_exactly_the_test_jobs(facts in facts_strategy()) {
        let catalog = fixture_catalog();
        let policy = PlanPolicy::default();
        let with = plan_pipeline(&facts, &catalog, &policy).unwrap();
        let mut untested = facts.clone();
        untested.tests.clear();
        let without = plan_pipeline(&untested, &catalog, &policy).unwrap();
        let expected: Vec<_> = with.jobs.iter().filter(|j| j.stage != Stage::Test).cloned().collect();
        prop_assert_eq!(without.jobs, expected);
    }

    #[test]
    fn plans_are_well_formed(facts in facts_strategy()) {
        let catalog = fixture_catalog();
        let plan = plan_pipeline(&facts, &catalog, &PlanPolicy::default()).unwrap();
        prop_assert_eq!(&plan, &plan_pipeline(&facts, &catalog, &PlanPolicy::default()).unwrap());
        let canonical: Vec<Stage> = Stage::ALL.into_iter().filter(|s| plan.stages.contains(s)).collect();
        prop_assert_eq!(&plan.stages, &canonical);
        let used: BTreeSet<Stage> = plan.jobs.iter().map(|j| j.stage).collect();
        prop_assert_eq!(used, plan.stages.iter().copied().collect::<BTreeSet<_>>());
        prop_assert!(plan.jobs.windows(2).all(|w| w[0].stage <= w[1].stage));
        let unique: BTreeSet<&str> = plan.jobs.iter().map(|j| j.id.as_str()).collect();
        prop_assert_eq!(unique.len(), plan.jobs.len());
        for job in &plan.jobs {
            let block = catalog.resolve(&job.block);
            prop_assert!(block.is_some(), "dangling {}", job.block);
            prop_assert_eq!(block.unwrap().stage(), Some(job.stage));
        }
    }
}
