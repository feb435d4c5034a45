#include <gtest/gtest.h>

#include "dag_oracle.hpp"
#include "otce/bvm_dag.hpp"

using namespace otce;
using namespace otce::bvm;

namespace {

std::vector<NodeId> ids(std::initializer_list<const char*> v) {
  std::vector<NodeId> out;
  for (auto s : v) out.emplace_back(s);
  return out;
}

const char* kDiamond =
    "task a add int:3,int:4\n"
    "task b mul a,int:10\n"
    "task c sub a,int:2\n"
    "task d add b,c\n"
    "output d\n";

std::uint64_t as_u64(const Bytes& b) {
  std::uint64_t v = 0;
  for (auto c : b) v = (v << 8) | c;
  return v;
}

}  // namespace

TEST(Dag, DiamondLayers) {
  auto dag = TaskDAG::parse(kDiamond);
  auto layers = dag.layers();
  ASSERT_EQ(layers.size(), 3u);
  EXPECT_EQ(layers[0], std::vector<TaskId>{"a"});
  EXPECT_EQ(layers[1], (std::vector<TaskId>{"b", "c"}));
  EXPECT_EQ(layers[2], std::vector<TaskId>{"d"});
  auto a = topo_schedule(dag, ids({"x", "y"}), {});
  EXPECT_NE(a.executor.at("b"), a.executor.at("c"));
  auto order = dag.topo_order();
  EXPECT_EQ(order.front(), "a");
  EXPECT_EQ(order.back(), "d");
}

TEST(Dag, CycleReportedAsWitness) {
  auto dag = TaskDAG::parse("task a add b\ntask b add a\n");
  try {
    dag.validate();
    FAIL();
  } catch (const CycleError& e) {
    EXPECT_EQ(e.code(), "cyclic-dag");
    EXPECT_EQ(e.cycle(), (std::vector<TaskId>{"a", "b"}));
  }
}

TEST(Dag, CycleWitnessWalksRealEdges) {
  auto dag = TaskDAG::parse(
      "task p add int:1\n"
      "task q add p,u\n"
      "task r add q\n"
      "task s add r\n"
      "task u add s\n");
  try {
    dag.layers();
    FAIL();
  } catch (const CycleError& e) {
    const auto& c = e.cycle();
    ASSERT_EQ(c.size(), 4u);
    auto edges = dag.edges();
    for (std::size_t i = 0; i < c.size(); ++i) {
      std::pair<TaskId, TaskId> edge{c[i], c[(i + 1) % c.size()]};
      EXPECT_NE(std::find(edges.begin(), edges.end(), edge), edges.end()) << edge.first << "->" << edge.second;
    }
  }
}

TEST(Dag, StructuralErrors) {
  TaskDAG d;
  d.add_task({"a", Op::Add, {Input::integer(1)}});
  EXPECT_THROW(d.add_task({"a", Op::Add, {Input::integer(1)}}), Error);
  EXPECT_THROW(d.add_task({"b", Op::Add, {}}), Error);
  EXPECT_THROW(d.add_output("zz"), Error);
  d.add_task({"c", Op::Add, {Input::ref("ghost")}});
  try {
    d.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unknown-task");
  }
}

TEST(Dag, ParseErrorsCarryLine) {
  try {
    TaskDAG::parse("# header\ntask a add int:1\ntask b frobnicate a\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "dag-parse");
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(parse_input("int:notanumber"), Error);
  EXPECT_THROW(parse_input("chunk:abcd"), Error);
}

TEST(Dag, TextRoundTrip) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    auto dag = TaskDAG::parse(oracle::dag_text(oracle::random_dag(rng, 15)));
    auto again = TaskDAG::parse(dag.to_text());
    EXPECT_EQ(again.to_text(), dag.to_text());
    EXPECT_EQ(again.edges(), dag.edges());
  }
}

TEST(Schedule, ChunkTaskGoesToHolder) {
  ChunkStore store;
  auto& [cid, chunk] = add_chunk(store, DataChunk::make(to_bytes("terrain"), {NodeId("y")}));
  TaskDAG dag;
  dag.add_task({"read", Op::Hash, {Input::chunk(cid)}});
  dag.add_task({"other", Op::Add, {Input::integer(1)}});
  auto a = topo_schedule(dag, ids({"x", "y", "z"}), store);
  EXPECT_EQ(a.executor.at("read"), NodeId("y"));
  EXPECT_TRUE(chunk.intact());
}

TEST(Schedule, HolderOfMostChunksWinsSmallestOnTie) {
  ChunkStore store;
  auto c1 = add_chunk(store, DataChunk::make(to_bytes("one"), {NodeId("y"), NodeId("z")})).first;
  auto c2 = add_chunk(store, DataChunk::make(to_bytes("two"), {NodeId("z")})).first;
  TaskDAG dag;
  dag.add_task({"both", Op::Concat, {Input::chunk(c1), Input::chunk(c2)}});
  dag.add_task({"tie", Op::Concat, {Input::chunk(c1)}});
  auto a = topo_schedule(dag, ids({"x", "y", "z"}), store);
  EXPECT_EQ(a.executor.at("both"), NodeId("z"));
  EXPECT_EQ(a.executor.at("tie"), NodeId("y"));
}

TEST(Schedule, EmptyGroupRejected) {
  EXPECT_THROW(topo_schedule(TaskDAG::parse(kDiamond), {}, {}), Error);
}

TEST(Chunks, TamperedContentDetected) {
  ChunkStore store;
  auto& [cid, chunk] = add_chunk(store, DataChunk::make(to_bytes("data"), {NodeId("x")}));
  chunk.content[0] ^= 1;
  EXPECT_FALSE(chunk.intact());
  EXPECT_THROW(literal_value(Input::chunk(cid), store), Error);
  EXPECT_THROW(literal_value(Input::chunk(Bytes(32, 7)), store), Error);
  EXPECT_THROW(DataChunk::make(to_bytes("x"), {}), Error);
}

TEST(Ops, DiamondArithmetic) {
  auto dag = TaskDAG::parse(kDiamond);
  auto out = sequential_oracle(dag, {});
  // a = 7, b = 70, c = 5, d = 75.
  EXPECT_EQ(as_u64(out.at("d")), 75u);
  EXPECT_EQ(out.at("d").size(), 8u);
}

TEST(Ops, SubWrapsAndHashConcats) {
  EXPECT_EQ(as_u64(apply_op(Op::Sub, {Input::integer(1).literal, Input::integer(2).literal})), ~std::uint64_t{0});
  auto l1 = to_bytes("left"), l2 = to_bytes("right");
  Bytes both = l1;
  both.insert(both.end(), l2.begin(), l2.end());
  EXPECT_EQ(apply_op(Op::Hash, {l1, l2}), crypto::digest_bytes(both));
  EXPECT_EQ(apply_op(Op::Concat, {l1, l2}), both);
}

TEST(Ops, EmptyDagHasNoOutputs) {
  TaskDAG dag;
  EXPECT_TRUE(sequential_oracle(dag, {}).empty());
  auto r = execute_collaborative(dag, topo_schedule(dag, ids({"x"}), {}), ids({"x"}), {}, {});
  EXPECT_TRUE(r.outputs.empty());
  EXPECT_FALSE(r.failed);
}

TEST(Ops, LibraryOracleMatchesIndependentEvaluator) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    auto tasks = oracle::random_dag(rng, 30);
    auto dag = TaskDAG::parse(oracle::dag_text(tasks));
    auto lib = sequential_oracle(dag, {});
    auto ref = oracle::eval_dag(tasks);
    ASSERT_EQ(lib.size(), ref.size());
    for (const auto& [id, v] : ref) ASSERT_EQ(lib.at(id), v) << id;
  }
}

TEST(Execute, HashOfConcatOnTwoNodes) {
  auto dag = TaskDAG::parse(
      "task l1 concat str:alpha\n"
      "task l2 concat str:beta\n"
      "task j concat l1,l2\n"
      "task h hash j\n"
      "output h\n");
  auto group = ids({"x", "y"});
  auto r = execute_collaborative(dag, topo_schedule(dag, group, {}), group, {}, {});
  EXPECT_EQ(r.outputs, sequential_oracle(dag, {}));
  EXPECT_EQ(r.outputs.at("h"), crypto::digest_bytes(to_bytes("alphabeta")));
  EXPECT_TRUE(r.respects_dependencies(dag));
}

TEST(Execute, ChainVersusParallel) {
  std::string chain = "task c0 add int:1\n";
  for (int i = 1; i < 10; ++i) chain += "task c" + std::to_string(i) + " add c" + std::to_string(i - 1) + ",int:1\n";
  chain += "output c9\n";
  auto chain_dag = TaskDAG::parse(chain);
  auto one = ids({"solo"});
  auto rc = execute_collaborative(chain_dag, topo_schedule(chain_dag, one, {}), one, {}, {});
  EXPECT_EQ(rc.finish_tick, 10u);
  EXPECT_EQ(as_u64(rc.outputs.at("c9")), 10u);

  std::string par;
  for (int i = 0; i < 10; ++i) par += "task p" + std::to_string(i) + " add int:" + std::to_string(i) + "\noutput p" + std::to_string(i) + "\n";
  auto par_dag = TaskDAG::parse(par);
  auto five = ids({"n1", "n2", "n3", "n4", "n5"});
  auto rp = execute_collaborative(par_dag, topo_schedule(par_dag, five, {}), five, {}, {});
  EXPECT_EQ(rp.finish_tick, 2u);
  EXPECT_LT(rp.finish_tick, rc.finish_tick);
}

TEST(Execute, CrashedExecutorIsReplaced) {
  auto dag = TaskDAG::parse(kDiamond);
  auto group = ids({"x", "y", "z"});
  auto plan = topo_schedule(dag, group, {});
  auto clean = execute_collaborative(dag, plan, group, {}, {});
  ASSERT_FALSE(clean.retried);

  ExecutionConfig cfg;
  cfg.faults.push_back({plan.executor.at("c"), sim::Behavior::Crash, 0, std::nullopt});
  auto r = execute_collaborative(dag, plan, group, {}, cfg);
  EXPECT_TRUE(r.retried);
  EXPECT_FALSE(r.failed);
  EXPECT_EQ(r.outputs, clean.outputs);
  EXPECT_NE(r.assignment.executor.at("c"), plan.executor.at("c"));
  EXPECT_EQ(r.attempts.size(), 2u);
}

TEST(Execute, EveryoneCrashedFails) {
  auto dag = TaskDAG::parse(kDiamond);
  auto group = ids({"x", "y"});
  ExecutionConfig cfg;
  cfg.faults.push_back({NodeId("x"), sim::Behavior::Crash, 0, std::nullopt});
  cfg.faults.push_back({NodeId("y"), sim::Behavior::Crash, 0, std::nullopt});
  auto r = execute_collaborative(dag, topo_schedule(dag, group, {}), group, {}, cfg);
  EXPECT_TRUE(r.failed);
}

TEST(Execute, RandomDagsMatchOracleWithDelays) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 15; ++i) {
    auto dag = TaskDAG::parse(oracle::dag_text(oracle::random_dag(rng, 30)));
    auto group = ids({"a", "b", "c", "d"});
    ExecutionConfig cfg;
    cfg.net.delay_max = 5;
    cfg.net.seed = static_cast<std::uint64_t>(i);
    auto r = execute_collaborative(dag, topo_schedule(dag, group, {}), group, {}, cfg);
    ASSERT_EQ(r.outputs, sequential_oracle(dag, {}));
    ASSERT_TRUE(r.respects_dependencies(dag));
  }
}

namespace {
struct VerifySetup {
  crypto::Keyring keys{11};
  TaskDAG dag = TaskDAG::parse(kDiamond);
  Outputs outputs = sequential_oracle(dag, {});

  std::vector<Verifier> verifiers(std::size_t honest, std::size_t byzantine) {
    std::vector<Verifier> v;
    for (std::size_t i = 0; i < honest + byzantine; ++i) {
      NodeId n("v" + std::to_string(i));
      v.push_back({n, &keys.ensure(n), i >= honest});
    }
    return v;
  }
};
}  // namespace

TEST(Verify, HonestQuorumAccepts) {
  VerifySetup s;
  auto v = s.verifiers(3, 0);
  auto r = verify_results(s.outputs, s.dag, {}, v, 3, "E000001", s.keys.directory());
  EXPECT_TRUE(r.accepted);
  EXPECT_EQ(r.valid_signatures, 3u);
  EXPECT_TRUE(r.refused.empty());
  EXPECT_EQ(r.submission.eid, "E000001");
}

TEST(Verify, FlippedOutputRefusedByAll) {
  VerifySetup s;
  auto v = s.verifiers(3, 0);
  auto bad = s.outputs;
  bad.at("d")[7] ^= 1;
  auto r = verify_results(bad, s.dag, {}, v, 3, "E000001", s.keys.directory());
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.refused.size(), 3u);
}

TEST(Verify, OneByzantineAmongFiveWithThresholdFour) {
  VerifySetup s;
  auto all = s.verifiers(4, 1);
  auto r = verify_results(s.outputs, s.dag, {}, all, 4, "E000001", s.keys.directory());
  EXPECT_TRUE(r.accepted);
  EXPECT_EQ(r.valid_signatures, 4u);

  // Every 4-member subset that contains the Byzantine verifier falls short.
  for (std::size_t skip = 0; skip < 4; ++skip) {
    std::vector<Verifier> sub;
    for (std::size_t i = 0; i < 5; ++i)
      if (i != skip) sub.push_back(all[i]);
    auto partial = verify_results(s.outputs, s.dag, {}, sub, 4, "E000001", s.keys.directory());
    EXPECT_FALSE(partial.accepted) << skip;
    EXPECT_EQ(partial.valid_signatures, 3u);
  }
}

TEST(Verify, BadThreshold) {
  VerifySetup s;
  EXPECT_THROW(verify_results(s.outputs, s.dag, {}, s.verifiers(2, 0), 0, "E1", s.keys.directory()), Error);
  EXPECT_THROW(verify_results(s.outputs, s.dag, {}, s.verifiers(2, 0), 3, "E1", s.keys.directory()), Error);
}
