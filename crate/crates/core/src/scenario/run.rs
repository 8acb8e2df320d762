use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::report::{ChainSummary, RunReport};
use super::schema::{Action, AuthExpect, AuthMode, Expectation, Outcome, OutputSpec, Scenario};
use super::verify::verify_journal;
use super::ScenarioError;
use crate::crypto::{keygen, seed_from_label, KeyPair};
use crate::hash::{digest_parts, Hash};
use crate::ledger::{ApplyOutcome, ChainConfig, ChainState};
use crate::model::{fingerprint_tx, Block, ChainId, ColorTag, EntityId, Transaction, TxInput, TxOutput};
use crate::multichain::{ChainRegistry, CrossChainTransfer, Fault, MultiChain, RegistryEntry};
use crate::propagation::{compare, ComparisonReport, GossipConfig};
use crate::rights::{
    authenticate_current, authenticate_historical, commit_cosigned, define_process, derive_entity, grant_usage,
    AccessLog, AccessLogEntry, AuthResult, AuthorizationGraph, Decision, OutputSelector, RightsFixture, RightsStore,
};
use crate::trust::{ReputationBook, TrustEvaluation, TrustFixture};

const FORK_TAG: &str = "ior/fork/v1";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub index: usize,
    pub op: String,
    /// Logical time at which the step ran.
    pub clock: u64,
    pub outcome: Outcome,
    pub expected: Outcome,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpectationResult {
    pub index: usize,
    pub check: Expectation,
    pub passed: bool,
    pub detail: String,
}

/// Reads, parses and runs the scenario at `path`. Relative fixture paths
/// resolve against the file's directory.
pub fn run_scenario(path: &Path, seed_override: Option<u64>) -> Result<RunReport, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    let mut scenario = Scenario::from_json(&text)?;
    if let Some(seed) = seed_override {
        scenario.seed = seed;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    run(&scenario, &base)
}

/// Runs an already parsed scenario against fresh state.
pub fn run(scenario: &Scenario, base_dir: &Path) -> Result<RunReport, ScenarioError> {
    scenario.check_references()?;
    let mut r = Runner::setup(scenario, base_dir)?;
    for (i, step) in scenario.steps.iter().enumerate() {
        r.clock += 1;
        let result = r.execute(i, &step.action)?;
        let (outcome, detail) = match result {
            Ok(d) => (Outcome::Ok, d),
            Err(d) => (Outcome::Rejected, d),
        };
        r.steps.push(StepRecord {
            index: i,
            op: step.action.op().into(),
            clock: r.clock,
            passed: outcome == step.expect,
            outcome,
            expected: step.expect.clone(),
            detail,
        });
    }
    let expectations =
        scenario.expectations.iter().enumerate().map(|(i, e)| r.check(i, e)).collect::<Vec<_>>();
    Ok(r.finish(scenario, expectations))
}

type StepResult = Result<Result<String, String>, ScenarioError>;

struct Runner {
    base_dir: PathBuf,
    seed: u64,
    keys: BTreeMap<String, KeyPair>,
    net: MultiChain,
    utxos: BTreeMap<String, (ChainId, Hash)>,
    rights: Option<(RightsStore, KeyPair, ChainId)>,
    access: BTreeMap<ChainId, AccessLog>,
    reputation: ReputationBook,
    clock: u64,
    steps: Vec<StepRecord>,
    propagation: Vec<ComparisonReport>,
    trust: Option<TrustEvaluation>,
}

fn derive_key(seed: u64, spec: &super::schema::KeySpec) -> Result<KeyPair, ScenarioError> {
    let bad = |why| ScenarioError::Key(spec.name.clone(), why);
    let key = match &spec.seed {
        Some(hex_seed) => {
            let bytes: [u8; 32] = hex::decode(hex_seed)
                .map_err(|_| bad("seed is not hex"))?
                .try_into()
                .map_err(|_| bad("seed must be 32 bytes"))?;
            keygen(&bytes)
        }
        None => keygen(&seed_from_label(seed, &spec.name)),
    };
    if spec.pk.as_ref().is_some_and(|pk| *pk != key.pk.to_hex()) {
        return Err(bad("public key does not match seed"));
    }
    Ok(key)
}

impl Runner {
    fn setup(s: &Scenario, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut keys = BTreeMap::new();
        for k in &s.keys {
            keys.insert(k.name.clone(), derive_key(s.seed, k)?);
        }
        // a network without chains never uses the system key
        let system = keys
            .get(&s.system_key)
            .cloned()
            .unwrap_or_else(|| keygen(&seed_from_label(s.seed, &s.system_key)));
        let registry = ChainRegistry::from_entries(s.chains.iter().map(|c| RegistryEntry {
            chain_id: c.chain_id,
            kind: c.kind,
            parent: c.parent,
            endpoint: c.endpoint.clone().unwrap_or_else(|| format!("mem://chain-{}", c.chain_id)),
        }));
        if !s.chains.is_empty() {
            registry.validate().map_err(|e| ScenarioError::Setup(e.to_string()))?;
        }
        let mut net = MultiChain::new(registry, system.clone());
        let mut utxos = BTreeMap::new();
        for c in &s.chains {
            let leaders: Vec<KeyPair> = c.leaders.iter().map(|l| keys[l].clone()).collect();
            let first = leaders.first().ok_or_else(|| ScenarioError::Setup(format!("chain {} has no leaders", c.chain_id)))?;
            let cfg = ChainConfig {
                chain_id: c.chain_id,
                validators: leaders.iter().map(|k| k.pk).collect(),
                system_key: system.pk,
            };
            let issuance = c.issuance.iter().map(|i| output(&keys, &i.output(), c.chain_id)).collect();
            let state = ChainState::genesis(cfg, issuance, &system, first).map_err(|e| ScenarioError::Setup(e.to_string()))?;
            if let Some(tx) = state.tip_block().transactions.first() {
                for (idx, i) in c.issuance.iter().enumerate() {
                    utxos.insert(i.name.clone(), (c.chain_id, tx.output_id(idx as u32)));
                }
            }
            net.add_chain(state, leaders);
        }
        let mut runner = Runner {
            base_dir: base_dir.to_path_buf(),
            seed: s.seed,
            keys,
            net,
            utxos,
            rights: None,
            access: BTreeMap::new(),
            reputation: ReputationBook::new(),
            clock: 0,
            steps: Vec::new(),
            propagation: Vec::new(),
            trust: None,
        };
        if let Some(spec) = &s.rights {
            let issuer = runner.keys[&spec.issuer].clone();
            let fixture = match (&spec.fixture, &spec.fixture_dir) {
                (Some(f), _) => f.clone(),
                (None, Some(dir)) => RightsFixture::load_dir(&base_dir.join(dir))
                    .map_err(|e| ScenarioError::Setup(e.to_string()))?,
                (None, None) => RightsFixture::default(),
            };
            let mut store = RightsStore::new(vec![issuer.pk]);
            let txs = fixture.install(&mut store, &issuer).map_err(|e| ScenarioError::Setup(e.to_string()))?;
            if !txs.is_empty() {
                runner
                    .submit_all(spec.permission_chain, txs)
                    .map_err(ScenarioError::Setup)?;
            }
            runner.rights = Some((store, issuer, spec.role_chain));
        }
        Ok(runner)
    }

    fn key(&self, name: &str) -> &KeyPair {
        &self.keys[name]
    }

    fn utxo(&self, name: &str) -> Hash {
        self.utxos[name].1
    }

    fn chain(&self, id: ChainId) -> &ChainState {
        self.net.chain(id).expect("chains are checked before running")
    }

    fn submit_all(&mut self, chain: ChainId, txs: Vec<Transaction>) -> Result<Vec<Hash>, String> {
        let state = self.net.chain_mut(chain).ok_or("unknown chain")?;
        let mut hashes = Vec::new();
        for tx in txs {
            hashes.push(state.submit_tx(tx).map_err(|e| e.to_string())?);
        }
        self.seal(chain)?;
        Ok(hashes)
    }

    fn submit(&mut self, chain: ChainId, tx: Transaction) -> Result<Hash, String> {
        Ok(self.submit_all(chain, vec![tx])?[0])
    }

    fn seal(&mut self, chain: ChainId) -> Result<(), String> {
        self.net.seal(chain, false).map(|_| ()).map_err(|e| e.to_string())
    }

    fn bind(&mut self, names: &[String], chain: ChainId, tx_hash: &Hash) {
        for (i, n) in names.iter().enumerate() {
            self.utxos.insert(n.clone(), (chain, crate::model::output_id(tx_hash, i as u32)));
        }
    }

    fn execute(&mut self, index: usize, action: &Action) -> StepResult {
        Ok(match action {
            Action::AssignRole { user, roles } => {
                let (store, issuer, role_chain) = self.rights.as_mut().expect("checked before running");
                let role_chain = *role_chain;
                match store.assign_role(user.clone(), roles.clone(), issuer) {
                    Ok(tx) => self.submit(role_chain, tx).map(|h| format!("role record {}", h.short())),
                    Err(e) => Err(e.to_string()),
                }
            }
            Action::DefineProcess { chain, name, participants, party, bind } => {
                let pks: Vec<_> = participants.iter().map(|p| self.key(p).pk).collect();
                let tx = define_process(self.chain(*chain), name, &pks, self.key(party));
                self.submit(*chain, tx).map(|h| {
                    self.bind(std::slice::from_ref(bind), *chain, &h);
                    format!("process {name} with {} participants", pks.len())
                })
            }
            Action::GrantUsage { chain, from, grantee, n, owner, bind } => {
                match grant_usage(self.chain(*chain), &self.utxo(from), self.key(grantee).pk, *n, self.key(owner)) {
                    Ok(tx) => self.submit(*chain, tx).map(|h| {
                        self.bind(bind, *chain, &h);
                        format!("granted {n} to {grantee}")
                    }),
                    Err(e) => Err(e.to_string()),
                }
            }
            Action::DeriveEntity { chain, inputs, entity, owner, process, signers, committer, bind } => {
                let ids: Vec<Hash> = inputs.iter().map(|u| self.utxo(u)).collect();
                let signers: Vec<&KeyPair> = signers.iter().map(|k| self.key(k)).collect();
                let draft = derive_entity(
                    self.chain(*chain),
                    &ids,
                    EntityId::new(entity.as_str()),
                    self.key(owner).pk,
                    self.utxo(process),
                    &signers,
                );
                let committer = self.key(committer).clone();
                let result = draft.and_then(|d| {
                    commit_cosigned(self.net.chain_mut(*chain).expect("checked"), d, &committer)
                });
                match result {
                    Ok(h) => self.seal(*chain).map(|_| {
                        self.bind(bind, *chain, &h);
                        format!("derived {entity}")
                    }),
                    Err(e) => Err(e.to_string()),
                }
            }
            Action::Spend { chain, inputs, outputs, signers, committer, seal, bind } => {
                let mut tx = Transaction::new(ColorTag(outputs.first().map(|o| o.color).unwrap_or(0)));
                tx.vins = inputs.iter().map(|u| TxInput::unsigned(self.utxo(u))).collect();
                tx.vouts = outputs.iter().map(|o| output(&self.keys, o, *chain)).collect();
                let signers: Vec<&KeyPair> = signers.iter().map(|k| self.key(k)).collect();
                tx.sign_inputs(self.chain(*chain), &signers);
                tx.commit(self.key(committer));
                let state = self.net.chain_mut(*chain).expect("checked");
                match state.submit_tx(tx) {
                    Ok(h) => {
                        let sealed = if *seal { self.seal(*chain) } else { Ok(()) };
                        sealed.map(|_| {
                            self.bind(bind, *chain, &h);
                            format!("spent {} inputs", inputs.len())
                        })
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            Action::Transfer { inputs, destination, outputs, owners, crash_after_prepares, unavailable, bind } => {
                let xfer = CrossChainTransfer::new(
                    inputs.iter().map(|(c, u)| (*c, self.utxo(u))).collect(),
                    *destination,
                    outputs.iter().map(|o| output(&self.keys, o, *destination)).collect(),
                );
                let owners: Vec<KeyPair> = owners.iter().map(|k| self.key(k).clone()).collect();
                let owner_refs: Vec<&KeyPair> = owners.iter().collect();
                let fault = crash_after_prepares.map(Fault::CrashAfterPrepares).unwrap_or_default();
                for c in unavailable {
                    self.net.set_available(*c, false);
                }
                let result = self.net.cross_chain_transfer(xfer, &owner_refs, fault);
                for c in unavailable {
                    self.net.set_available(*c, true);
                }
                match result {
                    Ok(report) => {
                        let created = report.mint.or_else(|| report.recycles.first().copied());
                        if let Some((c, h)) = created {
                            self.bind(bind, c, &h);
                        }
                        Ok(format!("moved {} to chain {destination}", report.value))
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            Action::Rollup { child, from, to } => match self.net.rollup_submit(*child, *from, *to) {
                Ok((proof, _)) => Ok(format!("rollup of chain {child} blocks {from}..={to}: {}", proof.commitment.short())),
                Err(e) => Err(e.to_string()),
            },
            Action::Fork { chain, length } => self.fork(index, *chain, *length),
            Action::RecordAccess { chain, user, actor, how, data } => {
                let actor = self.key(actor).clone();
                let entry = AccessLogEntry::new(user.clone(), &actor, self.clock, how.clone(), EntityId::new(data.as_str()));
                match self.access.entry(*chain).or_default().record_access(entry, &actor) {
                    Ok(tx) => self.submit(*chain, tx).map(|h| format!("access anchored by {}", h.short())),
                    Err(e) => Err(e.to_string()),
                }
            }
            Action::PublishReputation { chain, entity, score, scope } => {
                let system = self.net.system_key().clone();
                match self.reputation.publish_reputation(EntityId::new(entity.as_str()), *score, ColorTag(*scope), &system) {
                    Ok(tx) => self.submit(*chain, tx).map(|_| format!("{entity} scored {score}")),
                    Err(e) => Err(e.to_string()),
                }
            }
            Action::Propagation { n, lambda, i0, p, trials, mode } => {
                let cfg = GossipConfig { n: *n, lambda: *lambda, i0: *i0, p: *p, seed: self.seed, mode: *mode };
                match compare(&cfg, *trials) {
                    Ok(rep) => {
                        let d = format!("T analytic {:.6}, empirical {:.6}", rep.t_analytic, rep.t_emp_mean);
                        self.propagation.push(rep);
                        Ok(d)
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            Action::Trust { fixture, fixture_file } => {
                let fixture = match (fixture, fixture_file) {
                    (Some(f), _) => f.clone(),
                    (None, Some(file)) => TrustFixture::load(&self.base_dir.join(file))
                        .map_err(|e| ScenarioError::StepFailed { step: index, reason: e.to_string() })?,
                    (None, None) => unreachable!("checked before running"),
                };
                match fixture.evaluate() {
                    Ok(ev) => {
                        let d = format!("{}x{} trust matrix", ev.matrix.n(), ev.matrix.n());
                        self.trust = Some(ev);
                        Ok(d)
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
        })
    }

    /// Seals a marker block, then grows `length` marker blocks from its
    /// parent. With `length >= 2` the side branch outweighs the sealed
    /// block and the chain reorganizes.
    fn fork(&mut self, index: usize, chain: ChainId, length: usize) -> Result<String, String> {
        let system = self.net.system_key().clone();
        let producer = self.net.leaders(chain)[0].clone();
        let marker = |k: u64| {
            let salt = digest_parts(FORK_TAG, &[&(index as u64).to_le_bytes(), &k.to_le_bytes()]);
            fingerprint_tx(ColorTag(0), FORK_TAG, &salt, &system)
        };
        // pending transactions go into their own block first so the
        // orphaned block holds only the marker
        self.seal(chain)?;
        let state = self.net.chain_mut(chain).expect("checked");
        state.submit_tx(marker(0)).map_err(|e| e.to_string())?;
        self.seal(chain)?;
        let state = self.net.chain_mut(chain).expect("checked");
        let orphan = state.tip_block().clone();
        let mut parent = orphan.parent;
        let mut number = orphan.number;
        let mut reorgs = 0;
        for k in 0..length {
            let block = Block::seal(number, parent, vec![marker(k as u64 + 1)], &producer);
            parent = block.id;
            number += 1;
            if let ApplyOutcome::Reorg { .. } = state.apply_block(block).map_err(|e| e.to_string())? {
                reorgs += 1;
            }
        }
        Ok(format!(
            "side branch of {length} from block {}: {reorgs} reorg(s), orphan {}",
            orphan.number - 1,
            if state.is_canonical(&orphan.id) { "kept" } else { "dropped" }
        ))
    }

    fn check(&self, index: usize, e: &Expectation) -> ExpectationResult {
        let (passed, detail) = self.evaluate(e);
        ExpectationResult { index, check: e.clone(), passed, detail }
    }

    fn evaluate(&self, e: &Expectation) -> (bool, String) {
        let located = |name: &str| {
            let (c, id) = self.utxos[name];
            (self.chain(c), id)
        };
        match e {
            Expectation::TotalValue { equals } => {
                let v = self.net.total_value();
                (v == *equals, format!("total value {v}"))
            }
            Expectation::ChainValue { chain, equals } => match self.net.chain(*chain) {
                Some(c) => (c.supply().live == *equals, format!("chain value {}", c.supply().live)),
                None => (false, format!("no chain {chain}")),
            },
            Expectation::Value { utxo, equals } => {
                let (c, id) = located(utxo);
                let v = c.known_output(&id).map(|u| u.value);
                (v == Some(*equals), format!("value {v:?}"))
            }
            Expectation::Unspent { utxo, equals } => {
                let (c, id) = located(utxo);
                let live = c.is_unspent(&id);
                (live == *equals, format!("unspent {live}"))
            }
            Expectation::Owner { utxo, key } => {
                let (c, id) = located(utxo);
                let owner = c.known_output(&id).map(|u| u.owner);
                (owner == Some(self.key(key).pk), format!("owner {}", owner.map(|o| o.to_hex()).unwrap_or_default()))
            }
            Expectation::PathLength { utxo, equals } => {
                let (c, id) = located(utxo);
                match AuthorizationGraph::from_chain(c).trace_authorization(&id) {
                    Ok(p) => (p.len() == *equals, format!("path length {}", p.len())),
                    Err(err) => (false, err.to_string()),
                }
            }
            Expectation::SignerOnlyAtRoot { utxo, key } => {
                let (c, id) = located(utxo);
                let pk = self.key(key).pk;
                match AuthorizationGraph::from_chain(c).trace_authorization(&id) {
                    Ok(p) => {
                        let at_root = p.edges.first().is_some_and(|e| e.authorizers.contains(&pk));
                        let later = p.edges.iter().skip(1).filter(|e| e.authorizers.contains(&pk)).count();
                        (at_root && later == 0, format!("at root {at_root}, later edges {later}"))
                    }
                    Err(err) => (false, err.to_string()),
                }
            }
            Expectation::Access { user, data, action, allow } => match &self.rights {
                Some((store, _, _)) => {
                    let d = store.check_access(user, &EntityId::new(data.as_str()), action);
                    ((d == Decision::Allow) == *allow, format!("{d:?}"))
                }
                None => (false, "no rights store".into()),
            },
            Expectation::Reputation { entity, scope, equals } => {
                let got = self.reputation.latest(&EntityId::new(entity.as_str()), ColorTag(*scope));
                (got.is_some_and(|g| (g - equals).abs() < 1e-12), format!("latest {got:?}"))
            }
            Expectation::AuditVerified { equals } => {
                let rows = self.audit_rows();
                let all = !rows.is_empty() && rows.iter().all(|r| r.verified);
                (all == *equals, format!("{} rows, all verified {all}", rows.len()))
            }
            Expectation::Authenticate { utxo, mode, equals } => {
                let (c, id) = located(utxo);
                let Some(tx) = c.creating_tx(&id) else {
                    return (false, "creating transaction not found".into());
                };
                let result = match mode {
                    AuthMode::Current => {
                        let idx = (0..tx.vouts.len() as u32).find(|i| tx.output_id(*i) == id).unwrap_or(0);
                        authenticate_current(c, &tx.hash(), OutputSelector::Output(idx))
                    }
                    AuthMode::Historical => authenticate_historical(c, tx),
                };
                let got = match &result {
                    Ok(AuthResult::Valid) => AuthExpect::Valid,
                    Ok(AuthResult::Spent) => AuthExpect::Spent,
                    _ => AuthExpect::Invalid,
                };
                (got == *equals, format!("{result:?}"))
            }
            Expectation::TrustInvariants => match &self.trust {
                Some(ev) => {
                    let m = &ev.matrix;
                    let diag = (0..m.n()).all(|i| m.get(i, i) == 1.0);
                    let range = m.values.iter().flatten().all(|v| (0.0..=1.0).contains(v));
                    let asym = m.asymmetric_pairs().len();
                    (diag && range && asym > 0, format!("diagonal {diag}, in range {range}, asymmetric pairs {asym}"))
                }
                None => (false, "no trust run".into()),
            },
            Expectation::JournalVerifies { equals } => match verify_journal(&self.net.journal().to_jsonl()) {
                Ok(ok) => (ok == *equals, format!("journal verifies {ok}")),
                Err(err) => (false, err.to_string()),
            },
            Expectation::Height { chain, at_least } => match self.net.chain(*chain) {
                Some(c) => (c.height() >= *at_least, format!("height {}", c.height())),
                None => (false, format!("no chain {chain}")),
            },
        }
    }

    fn audit_rows(&self) -> Vec<crate::rights::AuditRow> {
        self.access
            .iter()
            .flat_map(|(c, log)| log.audit(self.chain(*c)))
            .collect()
    }

    fn finish(self, s: &Scenario, expectations: Vec<ExpectationResult>) -> RunReport {
        let passed = self.steps.iter().all(|r| r.passed) && expectations.iter().all(|e| e.passed);
        let chains = self.net.chains().map(ChainSummary::of).collect();
        let audit = self.audit_rows();
        let utxos = self
            .utxos
            .iter()
            .map(|(n, (c, id))| (n.clone(), format!("{c}:{}", id.to_hex())))
            .collect();
        RunReport {
            name: s.name.clone(),
            seed: self.seed,
            passed,
            total_value: self.net.total_value(),
            steps: self.steps,
            expectations,
            chains,
            utxos,
            propagation: self.propagation,
            trust: self.trust,
            audit,
            reputation: self.reputation.records().cloned().collect(),
            journal: self.net.journal(),
        }
    }
}

fn output(keys: &BTreeMap<String, KeyPair>, o: &OutputSpec, chain: ChainId) -> TxOutput {
    TxOutput {
        owner: keys[&o.owner].pk,
        value: o.value,
        kind: o.kind,
        entity: EntityId::new(o.entity.as_str()),
        color: ColorTag(o.color),
        origin_chain: chain,
    }
}
