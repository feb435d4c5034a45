#include "otce/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

namespace otce::scenario {

namespace {

std::string join_lines(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
  return out;
}

}  // namespace

ScenarioError::ScenarioError(std::vector<std::string> problems)
    : Error("invalid-scenario", join_lines(problems)), problems_(std::move(problems)) {}

namespace {

/// Collects problems while walking the YAML tree.
class Reader {
public:
  std::vector<std::string> problems;

  static std::size_t line(const YAML::Node& n) { return static_cast<std::size_t>(n.Mark().line) + 1; }

  void problem(std::size_t at, const std::string& msg) { problems.push_back("line " + std::to_string(at) + ": " + msg); }
  void problem(const YAML::Node& n, const std::string& msg) { problem(line(n), msg); }

  template <class T>
  std::optional<T> scalar(const YAML::Node& n, const std::string& what) {
    if (!n.IsScalar()) {
      problem(n, "type-error: " + what + " must be a scalar");
      return std::nullopt;
    }
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      problem(n, "type-error: bad value for " + what + " '" + n.Scalar() + "'");
      return std::nullopt;
    }
  }

  template <class T>
  void opt(const YAML::Node& map, const char* key, T& out) {
    if (auto n = map[key]) {
      if (auto v = scalar<T>(n, key)) out = *v;
    }
  }

  template <class T>
  bool req(const YAML::Node& map, const char* key, T& out, std::size_t at) {
    auto n = map[key];
    if (!n) {
      problem(at, std::string("missing-field: ") + key);
      return false;
    }
    if (auto v = scalar<T>(n, key)) {
      out = *v;
      return true;
    }
    return false;
  }

  template <class T>
  std::vector<T> list(const YAML::Node& n, const std::string& what) {
    std::vector<T> out;
    if (!n) return out;
    if (!n.IsSequence()) {
      problem(n, "type-error: " + what + " must be a list");
      return out;
    }
    for (const auto& item : n)
      if (auto v = scalar<T>(item, what)) out.push_back(*v);
    return out;
  }

  std::vector<NodeId> nodes(const YAML::Node& n, const std::string& what) {
    std::vector<NodeId> out;
    for (auto& s : list<std::string>(n, what)) out.emplace_back(s);
    return out;
  }

  void allow_keys(const YAML::Node& map, std::initializer_list<const char*> keys, const std::string& where) {
    if (!map.IsMap()) return;
    for (const auto& kv : map) {
      auto k = kv.first.as<std::string>();
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
        problem(kv.first, "unknown-key: " + k + " in " + where);
    }
  }
};

const std::set<std::string> kActions{"seal",    "seal_until", "register_did",  "create_otce", "consensus",
                                     "observe", "update_trust", "update_plan", "run_dag",     "submit_result",
                                     "suspend", "resume",     "terminate"};

void read_action(Reader& rd, const YAML::Node& item, Scenario& s) {
  if (!item.IsMap() || item.size() != 1) {
    rd.problem(item, "bad-action: each script entry is a single-key map");
    return;
  }
  auto kv = *item.begin();
  Action a;
  a.type = kv.first.as<std::string>();
  a.line = Reader::line(kv.first);
  const auto& body = kv.second;
  if (!kActions.contains(a.type)) {
    rd.problem(a.line, "unknown-action: " + a.type);
    return;
  }

  if (a.type == "seal" || a.type == "seal_until") {
    std::uint64_t v = 1;
    if (body.IsScalar()) {
      if (auto x = rd.scalar<std::uint64_t>(body, a.type)) v = *x;
    } else if (!body.IsNull()) {
      rd.problem(body, "type-error: " + a.type + " takes a number");
    }
    if (a.type == "seal") a.count = v;
    else a.height = v;
    s.script.push_back(std::move(a));
    return;
  }
  if (!body.IsMap()) {
    rd.problem(body, "type-error: " + a.type + " takes a map");
    return;
  }

  std::string by;
  rd.opt(body, "by", by);
  a.by = NodeId(by);
  rd.opt(body, "otce", a.otce);

  if (a.type == "register_did") {
    rd.allow_keys(body, {"node", "attributes", "by"}, a.type);
    std::string node;
    rd.req(body, "node", node, a.line);
    a.node = NodeId(node);
    if (auto attrs = body["attributes"]; attrs && attrs.IsMap()) {
      for (const auto& at : attrs)
        if (auto v = rd.scalar<std::string>(at.second, "attribute")) a.attributes[at.first.as<std::string>()] = *v;
    } else {
      rd.problem(a.line, "missing-field: attributes");
    }
  } else if (a.type == "create_otce") {
    rd.allow_keys(body, {"label", "edge", "group", "tv", "delta_t", "by"}, a.type);
    rd.req(body, "label", a.otce, a.line);
    rd.opt(body, "edge", a.edge);
    a.group = rd.nodes(body["group"], "group");
    if (body["tv"]) a.tv = rd.list<double>(body["tv"], "tv");
    rd.req(body, "delta_t", a.delta_t, a.line);
    if (a.edge.empty() == a.group.empty()) rd.problem(a.line, "bad-action: create_otce needs exactly one of edge, group");
    if (a.edge.empty() && !a.tv) rd.problem(a.line, "missing-field: tv (required with an explicit group)");
  } else if (a.type == "consensus") {
    rd.allow_keys(body, {"otce", "request"}, a.type);
    rd.req(body, "request", a.request, a.line);
  } else if (a.type == "observe") {
    rd.allow_keys(body, {"edge", "subject", "oracle", "compliant", "latency"}, a.type);
    std::string subject;
    rd.req(body, "edge", a.edge, a.line);
    rd.req(body, "subject", subject, a.line);
    a.subject = NodeId(subject);
    rd.req(body, "oracle", a.oracle, a.line);
    rd.opt(body, "compliant", a.compliant);
    rd.opt(body, "latency", a.latency);
  } else if (a.type == "update_trust") {
    rd.allow_keys(body, {"edge"}, a.type);
    rd.req(body, "edge", a.edge, a.line);
  } else if (a.type == "update_plan") {
    rd.allow_keys(body, {"otce", "edge", "tv", "by"}, a.type);
    rd.opt(body, "edge", a.edge);
    if (body["tv"]) a.tv = rd.list<double>(body["tv"], "tv");
    if (!a.edge.empty() == a.tv.has_value()) rd.problem(a.line, "bad-action: update_plan needs exactly one of edge, tv");
  } else if (a.type == "run_dag") {
    rd.allow_keys(body, {"otce", "dag", "byzantine_verifiers", "crash"}, a.type);
    rd.req(body, "dag", a.dag_text, a.line);
    a.byzantine_verifiers = rd.nodes(body["byzantine_verifiers"], "byzantine_verifiers");
    if (auto crash = body["crash"]) {
      if (!crash.IsSequence()) rd.problem(crash, "type-error: crash must be a list");
      else
        for (const auto& c : crash) {
          std::string node;
          Tick at = 0;
          rd.req(c, "node", node, Reader::line(c));
          rd.opt(c, "at", at);
          a.dag_faults.push_back({NodeId(node), sim::Behavior::Crash, at, std::nullopt});
        }
    }
  } else if (a.type == "suspend") {
    rd.allow_keys(body, {"otce", "by", "context"}, a.type);
    rd.opt(body, "context", a.context);
  } else {
    rd.allow_keys(body, {"otce", "by"}, a.type);
  }
  if (a.type != "register_did" && a.type != "observe" && a.type != "update_trust" && a.otce.empty())
    rd.problem(a.line, "missing-field: otce");
  s.script.push_back(std::move(a));
}

void check_references(Reader& rd, const Scenario& s, const std::map<std::string, std::size_t>& edge_lines) {
  std::set<NodeId> nodes(s.nodes.begin(), s.nodes.end());
  std::map<std::string, const EdgeSpec*> edges;
  for (const auto& e : s.edges) edges[e.id] = &e;
  std::set<std::string> oracles(s.oracles.begin(), s.oracles.end());
  std::set<std::string> chunks;
  for (const auto& c : s.chunks) chunks.insert(c.name);

  auto node = [&](std::size_t at, const NodeId& n) {
    if (!n.empty() && !nodes.contains(n)) rd.problem(at, "undefined-node: " + n.str());
  };
  for (const auto& e : s.edges)
    for (const auto& m : e.members) node(edge_lines.at(e.id), m);
  for (const auto& c : s.chunks)
    for (const auto& h : c.holders) node(0, h);

  std::set<std::string> labels;
  for (const auto& a : s.script) {
    node(a.line, a.by);
    node(a.line, a.node);
    node(a.line, a.subject);
    for (const auto& g : a.group) node(a.line, g);
    for (const auto& b : a.byzantine_verifiers) node(a.line, b);
    for (const auto& f : a.dag_faults) node(a.line, f.node);
    if (!a.edge.empty() && !edges.contains(a.edge)) rd.problem(a.line, "undefined-edge: " + a.edge);
    if (!a.oracle.empty() && !oracles.contains(a.oracle)) rd.problem(a.line, "undefined-oracle: " + a.oracle);
    if (a.type == "create_otce") {
      if (!labels.insert(a.otce).second) rd.problem(a.line, "duplicate-otce: " + a.otce);
    } else if (!a.otce.empty() && !labels.contains(a.otce)) {
      rd.problem(a.line, "undefined-otce: " + a.otce);
    }
    if (a.type == "run_dag") {
      static const std::regex chunk_ref(R"(chunk:([A-Za-z_][A-Za-z0-9_-]*))");
      for (std::sregex_iterator it(a.dag_text.begin(), a.dag_text.end(), chunk_ref), end; it != end; ++it)
        if (!chunks.contains((*it)[1].str())) rd.problem(a.line, "undefined-chunk: " + (*it)[1].str());
    }
  }
}

}  // namespace

Scenario load_scenario_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError({"line " + std::to_string(e.mark.line + 1) + ": parse-error: " + e.msg});
  }
  if (!root.IsMap()) throw ScenarioError({"line 1: parse-error: top level must be a map"});

  Reader rd;
  Scenario s;
  s.source = text;
  rd.allow_keys(root,
                {"name", "seed", "max_ticks", "view_timeout", "nodes", "edges", "oracles", "network", "faults", "mapping",
                 "trust", "policy", "chunks", "script"},
                "scenario");
  rd.opt(root, "name", s.name);
  if (!root["seed"]) rd.problem(1, "missing-seed: every scenario must set an explicit seed");
  else rd.opt(root, "seed", s.seed);
  rd.opt(root, "max_ticks", s.max_ticks);
  rd.opt(root, "view_timeout", s.view_timeout);

  s.nodes = rd.nodes(root["nodes"], "nodes");
  if (s.nodes.empty()) rd.problem(1, "missing-field: nodes");
  {
    std::set<NodeId> seen;
    for (const auto& n : s.nodes) {
      if (n.empty() || n.str().front() == '@') rd.problem(Reader::line(root["nodes"]), "bad-node-id: '" + n.str() + "'");
      if (!seen.insert(n).second) rd.problem(Reader::line(root["nodes"]), "duplicate-node: " + n.str());
    }
  }

  std::map<std::string, std::size_t> edge_lines;
  if (auto edges = root["edges"]) {
    for (const auto& e : edges) {
      EdgeSpec spec;
      const auto at = Reader::line(e);
      rd.allow_keys(e, {"id", "members", "trust"}, "edge");
      rd.req(e, "id", spec.id, at);
      spec.members = rd.nodes(e["members"], "members");
      rd.req(e, "trust", spec.trust, at);
      if (!edge_lines.emplace(spec.id, at).second) rd.problem(at, "duplicate-edge: " + spec.id);
      s.edges.push_back(std::move(spec));
    }
  }
  s.oracles = rd.list<std::string>(root["oracles"], "oracles");

  s.network.seed = s.seed;
  if (auto net = root["network"]) {
    rd.allow_keys(net, {"delay_min", "delay_max", "gst", "drop_rate", "async_delay_max"}, "network");
    rd.opt(net, "delay_min", s.network.delay_min);
    rd.opt(net, "delay_max", s.network.delay_max);
    if (net["gst"]) {
      Tick gst = 0;
      rd.opt(net, "gst", gst);
      s.network.gst = gst;
    }
    rd.opt(net, "drop_rate", s.network.drop_rate);
    rd.opt(net, "async_delay_max", s.network.async_delay_max);
    try {
      s.network.validate();
    } catch (const Error& e) {
      rd.problem(net, e.what());
    }
  }

  if (auto faults = root["faults"]) {
    for (const auto& f : faults) {
      ScenarioFault sf;
      const auto at = Reader::line(f);
      rd.allow_keys(f, {"node", "behavior", "start", "otce"}, "fault");
      std::string node, behavior;
      rd.req(f, "node", node, at);
      sf.spec.node = NodeId(node);
      if (rd.req(f, "behavior", behavior, at)) {
        if (auto b = sim::parse_behavior(behavior)) sf.spec.behavior = *b;
        else rd.problem(at, "unknown-behavior: " + behavior);
      }
      rd.opt(f, "start", sf.spec.start);
      rd.opt(f, "otce", sf.otce);
      if (!std::count(s.nodes.begin(), s.nodes.end(), sf.spec.node)) rd.problem(at, "undefined-node: " + node);
      s.faults.push_back(std::move(sf));
    }
  }

  if (auto m = root["mapping"]) {
    rd.allow_keys(m, {"weights", "tau"}, "mapping");
    if (auto w = m["weights"]) {
      s.mapping.weights.clear();
      for (const auto& row : w) s.mapping.weights.push_back(rd.list<double>(row, "weights row"));
    }
    rd.opt(m, "tau", s.mapping.tau);
    try {
      s.mapping.validate();
    } catch (const Error& e) {
      rd.problem(m, e.what());
    }
  }
  if (auto t = root["trust"]) {
    rd.allow_keys(t, {"alpha", "latency_bound"}, "trust");
    rd.opt(t, "alpha", s.trust.alpha);
    rd.opt(t, "latency_bound", s.trust.latency_bound);
    if (!(s.trust.alpha > 0.0 && s.trust.alpha <= 1.0)) rd.problem(t, "invalid-alpha: must lie in (0, 1]");
  }

  if (auto p = root["policy"]) {
    for (const auto& kv : p) {
      did::FormatRule rule;
      rd.allow_keys(kv.second, {"min_len", "max_len", "encoding"}, "policy rule");
      rd.opt(kv.second, "min_len", rule.min_len);
      rd.opt(kv.second, "max_len", rule.max_len);
      std::string enc = "any";
      rd.opt(kv.second, "encoding", enc);
      if (enc == "hex") rule.encoding = did::Encoding::Hex;
      else if (enc == "ascii") rule.encoding = did::Encoding::Ascii;
      else if (enc != "any") rd.problem(kv.second, "unknown-encoding: " + enc);
      s.policy.required[kv.first.as<std::string>()] = rule;
    }
  } else {
    s.policy.required["name"] = did::FormatRule{1, 64, did::Encoding::Ascii};
  }

  if (auto chunks = root["chunks"]) {
    for (const auto& c : chunks) {
      ChunkSpec spec;
      const auto at = Reader::line(c);
      rd.allow_keys(c, {"name", "content", "holders"}, "chunk");
      rd.req(c, "name", spec.name, at);
      std::string content;
      rd.req(c, "content", content, at);
      spec.content = to_bytes(content);
      spec.holders = rd.nodes(c["holders"], "holders");
      if (spec.holders.empty()) rd.problem(at, "missing-field: holders");
      for (const auto& h : spec.holders)
        if (!std::count(s.nodes.begin(), s.nodes.end(), h)) rd.problem(at, "undefined-node: " + h.str());
      s.chunks.push_back(std::move(spec));
    }
  }

  if (auto script = root["script"]) {
    if (!script.IsSequence()) rd.problem(script, "type-error: script must be a list");
    else
      for (const auto& item : script) read_action(rd, item, s);
  }
  check_references(rd, s, edge_lines);
  if (!rd.problems.empty()) throw ScenarioError(std::move(rd.problems));
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return load_scenario_text(buf.str());
}

bool MetricsReport::conserved() const {
  return std::all_of(otces.begin(), otces.end(), [](const auto& kv) {
    const auto& m = kv.second;
    return m.messages_sent == m.messages_delivered + m.messages_dropped + m.messages_in_flight;
  });
}

namespace {
std::string csv(const std::vector<std::string>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}
}  // namespace

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  out << "run.seed=" << seed << '\n'
      << "run.chain_height=" << chain_height << '\n'
      << "run.total_ticks=" << total_ticks << '\n'
      << "run.replay_equivalent=" << (replay_equivalent ? "true" : "false") << '\n'
      << "run.failed_txs=" << failed_txs << '\n'
      << "run.budget_exhausted=" << budget_exhausted << '\n'
      << "run.dids=" << dids << '\n'
      << "run.messages_conserved=" << (conserved() ? "true" : "false") << '\n';
  std::size_t terminated = 0;
  std::set<std::string> causes;
  std::vector<std::string> flagged;
  for (const auto& [label, m] : otces) {
    if (m.state == "Terminated") {
      ++terminated;
      causes.insert(m.cause);
    }
    if (!m.safety_flags.empty()) flagged.push_back(label);
  }
  out << "run.otces=" << otces.size() << '\n'
      << "run.terminated=" << terminated << '\n'
      << "run.termination_causes=" << csv({causes.begin(), causes.end()}) << '\n'
      << "run.flagged_otces=" << csv(flagged) << '\n';
  for (const auto& [label, m] : otces) {
    const auto p = "otce." + label + '.';
    out << p << "eid=" << m.eid << '\n'
        << p << "state=" << m.state << '\n'
        << p << "cause=" << m.cause << '\n'
        << p << "blocks_alive=" << m.blocks_alive << '\n'
        << p << "plan_history=" << csv(m.plan_history) << '\n'
        << p << "consensus_runs=" << m.consensus_runs << '\n'
        << p << "decisions=" << m.decisions << '\n'
        << p << "stalled_runs=" << m.stalled_runs << '\n'
        << p << "messages_sent=" << m.messages_sent << '\n'
        << p << "messages_delivered=" << m.messages_delivered << '\n'
        << p << "messages_dropped=" << m.messages_dropped << '\n'
        << p << "messages_in_flight=" << m.messages_in_flight << '\n'
        << p << "faults_injected=" << m.faults_injected << '\n'
        << p << "dag_runs=" << m.dag_runs << '\n'
        << p << "dag_mismatches=" << m.dag_mismatches << '\n'
        << p << "safety_flags=" << csv(m.safety_flags) << '\n';
  }
  for (const auto& [edge, t] : trust) out << "trust." << edge << '=' << std::fixed << std::setprecision(6) << t << '\n';
  return out.str();
}

namespace {

NodeId oracle_node(const std::string& id) { return NodeId("oracle:" + id); }

/// Replaces `chunk:<name>` with `chunk:<hex id>` for declared chunks.
std::string resolve_chunks(const std::string& text, const std::map<std::string, Bytes>& ids) {
  static const std::regex chunk_ref(R"(chunk:([A-Za-z_][A-Za-z0-9_-]*))");
  std::string out;
  auto last = text.cbegin();
  for (std::sregex_iterator it(text.begin(), text.end(), chunk_ref), end; it != end; ++it) {
    out.append(last, text.cbegin() + it->position());
    out += "chunk:" + to_hex(ids.at((*it)[1].str()));
    last = text.cbegin() + it->position() + it->length();
  }
  out.append(last, text.cend());
  return out;
}

class Runner {
public:
  explicit Runner(const Scenario& s)
      : s_(s), keys_(s.seed), ledger_(s.seed), registry_(ledger_.keys(), s.mapping), dids_(s.policy), graph_(s.trust) {
    for (const auto& n : s.nodes) {
      ledger_.register_key(n, keys_.ensure(n).public_key());
      graph_.add_node(n);
    }
    for (const auto& o : s.oracles) oracles_.add(oracle_node(o), keys_.ensure(oracle_node(o)).public_key());
    for (const auto& e : s.edges) graph_.add_hyperedge(e.id, e.members, e.trust);
    ledger_.add_contract(registry_);
    ledger_.add_contract(dids_);
    for (const auto& c : s.chunks) {
      auto& [id, chunk] = bvm::add_chunk(chunks_, bvm::DataChunk::make(c.content, {c.holders.begin(), c.holders.end()}));
      chunk_ids_[c.name] = id;
    }
  }

  RunResult run() {
    for (const auto& a : s_.script) {
      try {
        step(a);
      } catch (const ScenarioError&) {
        throw;
      } catch (const Error& e) {
        throw Error(e.code(), "line " + std::to_string(a.line) + " (" + a.type + "): " + e.what());
      }
    }
    return finish();
  }

private:
  void step(const Action& a) {
    if (a.type == "seal") {
      for (std::uint64_t i = 0; i < a.count; ++i) seal();
    } else if (a.type == "seal_until") {
      while (ledger_.current_height() < a.height) seal();
    } else if (a.type == "register_did") {
      did::RegisterDID body;
      body.pubkey = keys_.ensure(a.node).public_key();
      for (const auto& [k, v] : a.attributes) body.attestation[k] = to_bytes(v);
      submit(ledger::TxKind::RegisterDID, body.encode(), a.by.empty() ? a.node : a.by);
    } else if (a.type == "create_otce") {
      create(a);
    } else if (a.type == "consensus") {
      consensus(a);
    } else if (a.type == "observe") {
      ltm::BehaviorObservation obs{a.subject, a.edge, a.compliant, a.latency, ledger_.current_height()};
      auto rec = ltm::sign_observation(obs, oracle_node(a.oracle).str(), keys_.at(oracle_node(a.oracle)));
      const bool ok = graph_.ingest_oracle_record(rec, oracles_);
      trace_ << "# observe " << a.edge << ' ' << a.subject << " compliant=" << a.compliant << " latency=" << a.latency
             << " accepted=" << ok << '\n';
    } else if (a.type == "update_trust") {
      const double before = graph_.trust(a.edge);
      const double after = graph_.update_trust(a.edge);
      trace_ << "# trust " << a.edge << ' ' << std::fixed << std::setprecision(6) << before << " -> " << after << '\n';
      trace_ << std::defaultfloat;
    } else if (a.type == "update_plan") {
      registry::UpdatePlan body;
      body.eid = eid(a.otce);
      body.new_tv.components = a.tv ? *a.tv : std::vector<double>{graph_.trust(a.edge)};
      body.nonce = ++nonce_;
      submit(ledger::TxKind::UpdatePlan, body.encode(), sender(a));
    } else if (a.type == "run_dag") {
      run_dag(a);
    } else if (a.type == "submit_result") {
      auto it = verified_.find(a.otce);
      if (it == verified_.end()) {
        trace_ << "# submit_result " << a.otce << " skipped: no accepted run_dag result\n";
        return;
      }
      submit(ledger::TxKind::SubmitResult, registry::SubmitResult{it->second}.encode(), sender(a));
    } else if (a.type == "suspend") {
      registry::SuspendOTCE body{eid(a.otce), to_bytes(a.context), ++nonce_};
      submit(ledger::TxKind::SuspendOTCE, body.encode(), sender(a));
    } else if (a.type == "resume") {
      registry::ResumeOTCE body{eid(a.otce), ++nonce_};
      submit(ledger::TxKind::ResumeOTCE, body.encode(), sender(a));
    } else if (a.type == "terminate") {
      registry::TerminateOTCE body{eid(a.otce), "closed", ledger_.current_height()};
      submit(ledger::TxKind::TerminateOTCE, body.encode(), sender(a));
    }
  }

  void seal() {
    const auto& b = ledger_.seal_block();
    std::size_t failed = 0;
    for (const auto& r : b.txs) failed += r.status == ledger::TxStatus::Failed;
    trace_ << "# block " << b.height << " txs=" << b.txs.size() << " failed=" << failed << " hash=" << to_hex(b.hash).substr(0, 16)
           << '\n';
    for (const auto& r : b.txs)
      trace_ << "#   " << ledger::to_string(r.tx.kind) << ' ' << r.tx.sender << ' '
             << (r.status == ledger::TxStatus::Ok ? "ok" : "failed:" + r.reason) << '\n';
  }

  void submit(ledger::TxKind kind, Bytes payload, const NodeId& sender) {
    auto tx = ledger::Transaction::make(kind, std::move(payload), sender, keys_.at(sender));
    auto res = ledger_.submit_tx(tx);
    trace_ << "# submit " << ledger::to_string(kind) << ' ' << sender << ' '
           << (res.accepted() ? "accepted" : "rejected:" + ledger::to_string(res.status) + ":" + res.reason) << '\n';
    last_tx_ = tx.tx_id;
  }

  const std::vector<NodeId>& group_of(const std::string& label) const { return groups_.at(label); }

  NodeId sender(const Action& a) const { return a.by.empty() ? group_of(a.otce).front() : a.by; }

  registry::Eid eid(const std::string& label) const {
    auto e = registry_.eid_for_tx(create_tx_.at(label));
    if (!e) throw Error("otce-unavailable", label + " has no committed CreateOTCE; seal a block first");
    return *e;
  }

  const registry::OTCERecord& record(const std::string& label) const { return *registry_.find(eid(label)); }

  void create(const Action& a) {
    std::vector<NodeId> group = a.group;
    if (!a.edge.empty()) group = graph_.edge(a.edge).members;
    std::sort(group.begin(), group.end());
    TrustVector tv{a.tv ? *a.tv : std::vector<double>{graph_.trust(a.edge)}};
    registry::CreateOTCE body;
    body.label = a.otce;
    body.group = group;
    body.delta_t = a.delta_t;
    body.plan = map_trust_to_plan(s_.mapping, tv, static_cast<std::uint32_t>(group.size()));
    groups_[a.otce] = group;
    metrics_.otces[a.otce];
    auto who = a.by.empty() ? group.front() : a.by;
    submit(ledger::TxKind::CreateOTCE, body.encode(), who);
    create_tx_[a.otce] = last_tx_;
  }

  std::vector<sim::FaultSpec> faults_for(const std::string& label, const std::vector<NodeId>& group) const {
    std::vector<sim::FaultSpec> out;
    for (const auto& f : s_.faults)
      if ((f.otce.empty() || f.otce == label) && std::binary_search(group.begin(), group.end(), f.spec.node))
        out.push_back(f.spec);
    return out;
  }

  void account(OtceMetrics& m, const sim::Metrics& net, const sim::Trace& trace) {
    m.messages_sent += net.sent;
    m.messages_delivered += net.delivered;
    m.messages_dropped += net.dropped;
    m.messages_in_flight += net.in_flight;
    m.faults_injected += net.faults_injected;
    metrics_.total_ticks += trace.end_tick;
    if (trace.status == sim::RunStatus::BudgetExhausted) ++metrics_.budget_exhausted;
  }

  void consensus(const Action& a) {
    const auto& rec = record(a.otce);
    auto& m = metrics_.otces[a.otce];
    const auto iid = a.otce + "/c" + std::to_string(++m.consensus_runs);
    if (!rec.alive() || rec.state == registry::OTCEState::Suspend) {
      trace_ << "# consensus " << iid << " skipped state=" << registry::to_string(rec.state) << '\n';
      --m.consensus_runs;
      return;
    }
    consensus::InstanceSpec spec;
    spec.cfg = consensus::ConsensusConfig::from_plan(rec.plan, rec.group, iid, s_.view_timeout);
    spec.net = s_.network;
    spec.faults = faults_for(a.otce, rec.group);
    spec.request = to_bytes(a.request);
    spec.max_ticks = s_.max_ticks;
    auto out = consensus::run_instance(spec, keys_);

    trace_ << "# consensus " << iid << ' ' << to_string(rec.plan.protocol) << " n=" << rec.plan.n
           << " f_max=" << rec.plan.f_max << " faulty=" << out.faulty.size() << '\n'
           << out.trace.text();
    std::size_t honest_decided = rec.group.size() - out.faulty.size() - out.undecided.size();
    trace_ << "# outcome " << iid << " decided=" << honest_decided << " stalled=" << out.stalled
           << " flags=" << csv(out.safety_flags) << '\n';

    m.decisions += out.decisions.size();
    m.stalled_runs += out.stalled;
    for (const auto& f : out.safety_flags) m.safety_flags.push_back(iid + ":" + f);
    account(m, out.metrics, out.trace);
  }

  void run_dag(const Action& a) {
    const auto& rec = record(a.otce);
    auto& m = metrics_.otces[a.otce];
    const auto iid = a.otce + "/d" + std::to_string(++m.dag_runs);
    auto dag = bvm::TaskDAG::parse(resolve_chunks(a.dag_text, chunk_ids_));
    dag.validate();

    bvm::ExecutionConfig cfg;
    cfg.net = s_.network;
    cfg.max_ticks = s_.max_ticks;
    cfg.instance_id = iid;
    for (const auto& f : faults_for(a.otce, rec.group))
      if (f.behavior == sim::Behavior::Crash) cfg.faults.push_back(f);
    for (const auto& f : a.dag_faults) cfg.faults.push_back(f);

    const auto assignment = bvm::topo_schedule(dag, rec.group, chunks_);
    auto report = bvm::execute_collaborative(dag, assignment, rec.group, chunks_, cfg);
    const auto oracle = bvm::sequential_oracle(dag, chunks_);
    const bool match = !report.failed && report.outputs == oracle;
    m.dag_mismatches += !match;

    trace_ << "# dag " << iid << " tasks=" << dag.tasks().size() << " outputs=" << dag.outputs().size() << '\n'
           << report.trace_text();
    for (const auto& [id, run] : report.runs)
      trace_ << "# task " << id << ' ' << run.executor << " start=" << run.started << " end=" << run.finished << '\n';
    trace_ << "# dag-outcome " << iid << " retried=" << report.retried << " failed=" << report.failed
           << " match=" << match << " finish=" << report.finish_tick << '\n';
    for (const auto& t : report.attempts) {
      metrics_.total_ticks += t.end_tick;
      if (t.status == sim::RunStatus::BudgetExhausted) ++metrics_.budget_exhausted;
    }
    m.messages_sent += report.metrics.sent;
    m.messages_delivered += report.metrics.delivered;
    m.messages_dropped += report.metrics.dropped;
    m.messages_in_flight += report.metrics.in_flight;
    m.faults_injected += report.metrics.faults_injected;

    if (report.failed) return;
    std::vector<bvm::Verifier> verifiers;
    for (const auto& g : rec.group)
      verifiers.push_back({g, &keys_.ensure(g),
                           std::count(a.byzantine_verifiers.begin(), a.byzantine_verifiers.end(), g) > 0});
    auto v = bvm::verify_results(report.outputs, dag, chunks_, verifiers, rec.plan.verify_threshold, rec.eid,
                                 keys_.directory());
    trace_ << "# verify " << iid << " accepted=" << v.accepted << " signatures=" << v.valid_signatures << '/'
           << rec.plan.verify_threshold << '\n';
    if (v.accepted) verified_[a.otce] = std::move(v.submission);
  }

  RunResult finish() {
    RunResult r;
    r.chain = ledger_.chain();
    r.trace = trace_.str();
    r.otce_dump = registry_.state_dump();
    r.did_dump = dids_.state_dump();
    std::ostringstream tg;
    graph_.dump(tg);
    r.trust_dump = tg.str();

    auto& mr = metrics_;
    mr.seed = s_.seed;
    mr.chain_height = ledger_.current_height();
    mr.dids = dids_.records().size();
    for (const auto& b : r.chain)
      for (const auto& t : b.txs) mr.failed_txs += t.status == ledger::TxStatus::Failed;
    for (const auto& [id, e] : graph_.edges()) mr.trust[id] = e.trust;
    for (auto& [label, m] : mr.otces) {
      auto e = registry_.eid_for_tx(create_tx_.at(label));
      if (!e) {
        m.state = "uncommitted";
        m.cause = "none";
        continue;
      }
      const auto& rec = *registry_.find(*e);
      m.eid = rec.eid;
      m.state = registry::to_string(rec.state);
      m.cause = registry::to_string(rec.cause);
      m.blocks_alive = rec.terminated_height.value_or(mr.chain_height) - rec.created_height;
      for (const auto& [h, plan] : registry_.plan_history().at(rec.eid))
        m.plan_history.push_back(to_string(plan.protocol) + "@" + std::to_string(h));
    }

    auto replay = replay_chain(r.chain, s_);
    mr.replay_equivalent = !replay.bad_height && !replay.divergence && replay.otce_dump == r.otce_dump &&
                           replay.did_dump == r.did_dump;
    r.metrics = mr;
    return r;
  }

  const Scenario& s_;
  crypto::Keyring keys_;
  ledger::Ledger ledger_;
  registry::OTCERegistry registry_;
  did::DIDRegistry dids_;
  ltm::TrustHypergraph graph_;
  crypto::KeyDirectory oracles_;
  bvm::ChunkStore chunks_;
  std::map<std::string, Bytes> chunk_ids_;
  std::map<std::string, std::vector<NodeId>> groups_;
  std::map<std::string, Bytes> create_tx_;
  std::map<std::string, registry::ResultSubmission> verified_;
  Bytes last_tx_;
  std::uint64_t nonce_ = 0;
  MetricsReport metrics_;
  std::ostringstream trace_;
};

}  // namespace

RunResult run_scenario(Scenario s, const RunOptions& opts) {
  if (opts.seed_override) s.seed = *opts.seed_override;
  if (opts.max_ticks) s.max_ticks = *opts.max_ticks;
  s.network.seed = s.seed;
  Runner runner(s);
  return runner.run();
}

void write_outputs(const RunResult& r, const Scenario& s, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(out_dir / name, std::ios::binary);
    if (!out) throw Error("io-error", "cannot write " + (out_dir / name).string());
    out << text;
  };
  std::ostringstream chain;
  ledger::dump_chain(r.chain, chain);
  write("chain.dump", chain.str());
  write("trace.log", r.trace);
  write("metrics.txt", r.metrics.to_text());
  write("otce.dump", r.otce_dump);
  write("did.dump", r.did_dump);
  write("trust.dump", r.trust_dump);
  write("scenario.yaml", s.source);
}

ReplayReport replay_chain(const ledger::Chain& chain, const Scenario& s) {
  ReplayReport rep;
  rep.bad_height = ledger::verify_chain(chain);
  crypto::Keyring keys(s.seed);
  for (const auto& n : s.nodes) keys.ensure(n);
  registry::OTCERegistry reg(keys.directory(), s.mapping);
  did::DIDRegistry dids(s.policy);
  rep.divergence = ledger::Ledger::replay(chain, {&reg, &dids});
  rep.otce_dump = reg.state_dump();
  rep.did_dump = dids.state_dump();
  return rep;
}

}  // namespace otce::scenario
