#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "topogen/errors.hpp"
#include "topogen/pipeline.hpp"

namespace topogen::cli {

namespace {

namespace fs = std::filesystem;

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f << content;
}

std::string state_path(const std::string& checkpoint) { return checkpoint + ".state.json"; }

TrainerState load_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trainer state " + path);
  try {
    return trainer_state_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(path + ": " + ex.what());
  }
}

void warn_degraded(const ExecutionResult& res, std::ostream& err) {
  for (const auto& e : res.transcript.entries) {
    if (e.error) err << "warning: agent " << e.speaker << " " << e.kind << " failed: " << *e.error << '\n';
  }
}

struct TrainArgs {
  std::string config, queries, out, report;
  bool resume = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(a.config);
  auto rt = make_runtime(cfg);
  const auto queries = load_queries(a.queries);
  const std::string report_path = a.report.empty() ? a.out + ".report.jsonl" : a.report;

  ParamStore params;
  std::optional<TrainerState> resumed;
  if (a.resume && fs::exists(state_path(a.out))) {
    params = load_policy_checkpoint(*rt, a.out);
    resumed = load_state(state_path(a.out));
  } else {
    params = rt->policy->init_params(cfg.hp.seed);
  }

  Trainer trainer(*rt->policy, params, cfg.roster, *rt->embedder, *rt->evaluator, rt->backends, rt->exec,
                  rt->trainer_config());
  if (resumed) trainer.set_state(*resumed);

  auto save = [&](const TrainerState& s) {
    params.set_step(s.step);
    save_param_store(params, a.out);
    write_file(state_path(a.out), to_json(s).dump() + "\n");
  };

  std::vector<StepReport> report;
  try {
    report = trainer.train(queries);
  } catch (const TrainingHalted& ex) {
    save(ex.state());
    err << "error: training halted: " << ex.what() << "; state saved to " << state_path(a.out)
        << " (rerun with --resume)\n";
    return kBackendError;
  }
  save(trainer.state());

  std::ofstream rep(report_path, resumed ? std::ios::app : std::ios::trunc);
  if (!rep) throw InputError("cannot write " + report_path);
  for (const auto& r : report) rep << to_json(r).dump() << '\n';

  double tail = 0.0;
  const std::size_t k = std::min<std::size_t>(report.size(), 10);
  for (std::size_t i = report.size() - k; i < report.size(); ++i) tail += report[i].reward;
  out << "trained " << trainer.state().step << " steps; mean reward over last " << k << " steps "
      << (k ? tail / k : 0.0) << "; checkpoint " << a.out << '\n';
  return kOk;
}

struct DistillArgs {
  std::string config, queries, teacher, out;
};

int cmd_distill(const DistillArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(a.config);
  auto rt = make_runtime(cfg);
  const auto queries = load_queries(a.queries);
  if (!fs::exists(a.teacher)) throw InputError("teacher checkpoint not found: " + a.teacher);
  const ParamStore teacher = load_policy_checkpoint(*rt, a.teacher);

  const std::size_t calls_before = rt->backend_calls();
  DistillResult res = distill_train(*rt->policy, teacher, queries, *rt->embedder, rt->distill_config());
  res.backend_calls = rt->backend_calls() - calls_before;
  if (res.backend_calls != 0) {
    err << "error: distillation made " << res.backend_calls << " agent-backend calls\n";
    return kBackendError;
  }
  save_students(res.students, teacher, a.out);

  nlohmann::ordered_json rep;
  rep["students"] = res.students.size();
  rep["epochs"] = res.epoch_mean_kl.size();
  rep["initial_mean_kl"] = res.epoch_mean_kl.empty() ? res.final_mean_kl : res.epoch_mean_kl.front();
  rep["final_mean_kl"] = res.final_mean_kl;
  rep["backend_calls"] = res.backend_calls;
  write_file((fs::path(a.out) / "distill_report.json").string(), rep.dump() + "\n");
  out << "distilled " << res.students.size() << " local policies; mean pair KL " << res.final_mean_kl
      << "; backend calls 0; written to " << a.out << '\n';
  return kOk;
}

struct PolicyArgs {
  std::string config, checkpoint, students;
  bool decentralized = false;
};

TopologyGenerator make_generator(const Runtime& rt, const PolicyArgs& a, ParamStore& params,
                                 LoadedStudents& students) {
  if (a.decentralized) {
    if (a.students.empty()) throw InputError("--decentralized needs --students");
    students = load_students(a.students, rt.config.roster.size());
    return [&rt, &students](const QueryRecord& q, UniformStream& rng) {
      return generate_decentralized(rt, students, q, rng);
    };
  }
  if (a.checkpoint.empty()) throw InputError("need --checkpoint (or --decentralized with --students)");
  if (!fs::exists(a.checkpoint)) throw InputError("checkpoint not found: " + a.checkpoint);
  params = load_policy_checkpoint(rt, a.checkpoint);
  const double tau = rt.config.hp.tau_end;
  return [&rt, &params, tau](const QueryRecord& q, UniformStream& rng) {
    return generate_centralized(rt, params, q, tau, rng);
  };
}

struct RunArgs {
  PolicyArgs policy;
  std::string query, query_id = "cli", export_topology, export_transcript;
  std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(a.policy.config);
  auto rt = make_runtime(cfg);
  ParamStore params;
  LoadedStudents students;
  auto gen = make_generator(*rt, a.policy, params, students);

  const QueryRecord q{a.query_id, a.query, std::nullopt};
  UniformStream rng(a.seed.value_or(cfg.hp.seed));
  GeneratedTopology topo = gen(q, rng);
  if (!a.export_topology.empty()) write_file(a.export_topology, dump_topology(topo.artifact) + "\n");

  ExecutionResult res = execute(*rt, topo, q);
  warn_degraded(res, err);
  if (!a.export_transcript.empty()) write_file(a.export_transcript, transcript_jsonl(res.transcript));
  if (res.total_failure) {
    err << "error: every agent call failed\n";
    return kBackendError;
  }
  out << res.answer << '\n';
  return kOk;
}

struct EvalArgs {
  PolicyArgs policy;
  std::string queries, out;
  std::optional<std::uint64_t> seed;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  const RunConfig cfg = load_config(a.policy.config);
  auto rt = make_runtime(cfg);
  ParamStore params;
  LoadedStudents students;
  auto gen = make_generator(*rt, a.policy, params, students);
  const auto queries = load_queries(a.queries);
  const EvalSummary summary = evaluate(*rt, gen, queries, a.seed.value_or(cfg.hp.seed));
  const std::string text = to_json(summary).dump(2) + "\n";
  if (!a.out.empty()) write_file(a.out, text);
  out << text;
  return kOk;
}

struct InspectArgs {
  std::string topology, config;
  std::optional<NodeId> decision_maker;
  int debate_rounds = 2;
  bool json = false;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out, std::ostream&) {
  const TopologyArtifact t = load_topology_file(a.topology);
  if (auto v = validate(t.graph); !v.empty()) throw InputError(a.topology + ": " + v.front().detail);
  NodeId dm = 0;
  int rounds = a.debate_rounds;
  if (!a.config.empty()) {
    const RunConfig cfg = load_config(a.config);
    dm = cfg.roster.decision_maker;
    rounds = cfg.hp.debate_rounds;
  }
  if (a.decision_maker) {
    dm = *a.decision_maker;
  } else if (a.config.empty() && !t.node_ids.empty()) {
    dm = *std::max_element(t.node_ids.begin(), t.node_ids.end());
  }
  HeteroGraph g(std::max<std::size_t>(t.graph.num_nodes(), dm + 1));
  for (const auto& e : t.graph.sorted_edges()) g.add_edge(e.src, e.dst, e.relation, e.confidence);
  const ExecutionPlan plan = build_plan(g, t.node_ids, dm, ScheduleOptions{rounds});
  if (a.json) {
    nlohmann::ordered_json j;
    j["topology"] = to_json(t);
    j["plan"] = to_json(plan);
    out << j.dump(2) << '\n';
    return kOk;
  }
  out << "query " << t.query_id << '\n';
  out << "nodes\n";
  for (NodeId id : t.node_ids) out << "  " << id << "  " << (id < t.roles.size() ? t.roles[id] : "") << '\n';
  out << "edges\n";
  for (const auto& e : t.graph.sorted_edges()) {
    out << "  " << e.src << " -> " << e.dst << "  " << to_string(e.relation) << "  " << e.confidence << '\n';
  }
  out << "plan (decision maker " << plan.decision_maker << (plan.fallback ? ", fallback" : "") << ", "
      << expected_calls(plan) << " calls)\n";
  std::size_t idx = 0;
  for (const auto& step : plan.steps) {
    out << "  " << idx++ << "  ";
    if (const auto* s = std::get_if<ActivateStep>(&step)) {
      out << "activate " << s->node;
      if (!s->conditioned_inputs.empty()) {
        out << " inputs";
        for (NodeId u : s->conditioned_inputs) out << ' ' << u;
      }
      if (!s->debate_partners.empty()) {
        out << " after debate with";
        for (NodeId u : s->debate_partners) out << ' ' << u;
      }
    } else if (const auto* f = std::get_if<FeedbackExchange>(&step)) {
      out << "feedback " << f->critic << " reviews " << f->author;
    } else if (const auto* d = std::get_if<DebateExchange>(&step)) {
      out << "debate " << d->challenger << " challenges " << d->proposer << " for " << d->rounds << " rounds";
    }
    out << '\n';
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"One-shot typed communication topologies for agent teams", "topogen"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Centralized policy-gradient training");
  train->add_option("--config", ta.config)->required();
  train->add_option("--queries", ta.queries)->required();
  train->add_option("--out", ta.out, "checkpoint path")->required();
  train->add_option("--report", ta.report, "JSONL training report (default <out>.report.jsonl)");
  train->add_flag("--resume", ta.resume, "continue from <out> and its saved trainer state");

  DistillArgs da;
  auto* distill = app.add_subcommand("distill", "Distill per-agent local policies from a checkpoint");
  distill->add_option("--config", da.config)->required();
  distill->add_option("--queries", da.queries)->required();
  distill->add_option("--teacher", da.teacher)->required();
  distill->add_option("--out", da.out, "output directory")->required();

  auto add_policy = [](CLI::App* c, PolicyArgs& p) {
    c->add_option("--config", p.config)->required();
    c->add_option("--checkpoint", p.checkpoint, "centralized checkpoint");
    c->add_option("--students", p.students, "directory of local policies");
    c->add_flag("--decentralized", p.decentralized);
  };

  RunArgs ra;
  auto* runc = app.add_subcommand("run", "Answer one query with a generated topology");
  add_policy(runc, ra.policy);
  runc->add_option("--query", ra.query)->required();
  runc->add_option("--query-id", ra.query_id);
  runc->add_option("--export-topology", ra.export_topology);
  runc->add_option("--export-transcript", ra.export_transcript);
  runc->add_option("--seed", ra.seed);

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "Evaluate over a query file");
  add_policy(evalc, ea.policy);
  evalc->add_option("--queries", ea.queries)->required();
  evalc->add_option("--out", ea.out, "also write the report here");
  evalc->add_option("--seed", ea.seed);

  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect", "Pretty-print a topology file and its execution plan");
  inspect->add_option("--topology", ia.topology)->required();
  inspect->add_option("--config", ia.config, "take decision maker and debate rounds from a run config");
  inspect->add_option("--decision-maker", ia.decision_maker, "default: highest listed node id");
  inspect->add_option("--debate-rounds", ia.debate_rounds);
  inspect->add_flag("--json", ia.json);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kInputError;
  }

  try {
    if (train->parsed()) return cmd_train(ta, out, err);
    if (distill->parsed()) return cmd_distill(da, out, err);
    if (runc->parsed()) return cmd_run(ra, out, err);
    if (evalc->parsed()) return cmd_eval(ea, out, err);
    if (inspect->parsed()) return cmd_inspect(ia, out, err);
  } catch (const BackendError& ex) {
    err << "error: backend: " << ex.what() << '\n';
    return kBackendError;
  } catch (const NumericError& ex) {
    err << "error: numeric: " << ex.what() << '\n';
    return kNumericError;
  } catch (const InputError& ex) {
    err << "error: " << ex.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kInputError;
  }
  return kInputError;
}

}  // namespace topogen::cli
