#include <gtest/gtest.h>

#include "otce/simnet.hpp"

using namespace otce;
using namespace otce::sim;

namespace {

/// Forwards every message with a hop budget to all peers, one hop fewer.
class Flood : public Process {
public:
  explicit Flood(std::vector<NodeId> peers, NodeId self) : peers_(std::move(peers)), self_(std::move(self)) {}

  StepOutput on_message(const NodeId&, const Bytes& payload, const std::string&) override {
    ++received;
    StepOutput out;
    if (payload.empty() || payload[0] == 0) return out;
    for (const auto& p : peers_)
      if (p != self_) out.messages.push_back({p, Bytes{static_cast<std::uint8_t>(payload[0] - 1)}, "flood"});
    return out;
  }
  StepOutput on_timer(std::uint64_t id) override {
    fired.push_back(id);
    StepOutput out;
    out.records.push_back("TIMER " + std::to_string(id));
    return out;
  }

  int received = 0;
  std::vector<std::uint64_t> fired;

private:
  std::vector<NodeId> peers_;
  NodeId self_;
};

/// Asks for one timer on every message.
class Sleeper : public Process {
public:
  StepOutput on_message(const NodeId&, const Bytes& payload, const std::string&) override {
    StepOutput out;
    out.timers.push_back({payload.empty() ? Tick{0} : Tick{payload[0]}, 7});
    return out;
  }
  StepOutput on_timer(std::uint64_t id) override {
    fired_ids.push_back(id);
    return {};
  }
  std::vector<std::uint64_t> fired_ids;
};

struct Cluster {
  std::vector<NodeId> ids;
  std::vector<std::unique_ptr<Flood>> procs;
  Network net;

  Cluster(std::size_t n, NetworkConfig cfg, std::string instance = "i") : net(cfg, std::move(instance)) {
    for (std::size_t i = 0; i < n; ++i) ids.emplace_back("n" + std::to_string(i));
    for (const auto& id : ids) {
      procs.push_back(std::make_unique<Flood>(ids, id));
      net.add_node(id, *procs.back());
    }
  }
};

}  // namespace

TEST(Send, UnitDelayIsExact) {
  Cluster c(2, NetworkConfig{});
  for (int i = 0; i < 20; ++i) {
    auto ev = c.net.send(c.ids[0], {c.ids[1], {0}, "x"});
    ASSERT_TRUE(ev);
    EXPECT_EQ(ev->deliver_at, 1u);
  }
}

TEST(Send, DelaysStayInRange) {
  NetworkConfig cfg;
  cfg.delay_min = 2;
  cfg.delay_max = 9;
  cfg.seed = 4;
  Cluster c(2, cfg);
  std::set<Tick> seen;
  for (int i = 0; i < 500; ++i) {
    auto ev = c.net.send(c.ids[0], {c.ids[1], {0}, "x"});
    ASSERT_GE(ev->deliver_at, 2u);
    ASSERT_LE(ev->deliver_at, 9u);
    seen.insert(ev->deliver_at);
  }
  EXPECT_EQ(seen.size(), 8u);
}

TEST(Send, CrashedSenderIsSilenced) {
  Cluster c(3, NetworkConfig{});
  c.net.inject_fault({c.ids[0], Behavior::Crash, 5, std::nullopt});
  c.net.inject(6, c.ids[0], {1}, "go");
  c.net.inject(4, c.ids[1], {0}, "probe");
  auto t = c.net.run_until(100);
  EXPECT_EQ(c.procs[0]->received, 0);
  EXPECT_EQ(c.procs[1]->received, 1);
  EXPECT_EQ(c.net.metrics().dropped, 1u);
}

TEST(Send, CrashedSenderDirectSendDropped) {
  Cluster c(2, NetworkConfig{});
  c.net.inject_fault({c.ids[0], Behavior::Crash, 0, std::nullopt});
  EXPECT_FALSE(c.net.send(c.ids[0], {c.ids[1], {0}, "x"}));
}

TEST(Send, UnknownNodesRejected) {
  Cluster c(2, NetworkConfig{});
  EXPECT_THROW(c.net.send(NodeId("ghost"), {c.ids[1], {0}, "x"}), Error);
  EXPECT_THROW(c.net.send(c.ids[0], {NodeId("ghost"), {0}, "x"}), Error);
  EXPECT_THROW(c.net.inject_fault({NodeId("ghost"), Behavior::Crash, 0, std::nullopt}), Error);
}

TEST(Send, SameSeedSameDelays) {
  NetworkConfig cfg;
  cfg.delay_min = 1;
  cfg.delay_max = 50;
  cfg.drop_rate = 0.2;
  cfg.seed = 99;
  auto draw = [&] {
    Cluster c(3, cfg);
    std::vector<std::optional<Tick>> out;
    for (int i = 0; i < 200; ++i) {
      auto ev = c.net.send(c.ids[i % 3], {c.ids[(i + 1) % 3], {0}, "x"});
      out.push_back(ev ? std::optional<Tick>(ev->deliver_at) : std::nullopt);
    }
    return out;
  };
  EXPECT_EQ(draw(), draw());
}

TEST(Send, DropAllSuppressesOutput) {
  Cluster c(3, NetworkConfig{});
  c.net.inject_fault({c.ids[0], Behavior::DropAll, 0, std::nullopt});
  c.net.inject(0, c.ids[0], {1}, "go");
  c.net.run_until(100);
  EXPECT_EQ(c.procs[0]->received, 1);
  EXPECT_EQ(c.procs[1]->received + c.procs[2]->received, 0);
}

TEST(Send, EquivocatorRewritesOddRecipients) {
  Cluster c(4, NetworkConfig{});
  c.net.inject_fault({c.ids[0], Behavior::Equivocate, 0, std::nullopt});
  c.net.set_equivocator([](const NodeId&, const Outbound& m) {
    auto alt = m;
    alt.payload = {0xee};
    return std::optional<Outbound>(alt);
  });
  std::map<NodeId, Bytes> got;
  for (std::size_t i = 1; i < 4; ++i) got[c.ids[i]] = c.net.send(c.ids[0], {c.ids[i], {0x01}, "x"})->payload;
  EXPECT_EQ(got[c.ids[1]], Bytes{0xee});
  EXPECT_EQ(got[c.ids[2]], Bytes{0x01});
  EXPECT_EQ(got[c.ids[3]], Bytes{0xee});
  EXPECT_EQ(c.net.metrics().equivocated, 2u);
}

TEST(Send, DelayMaxHoldsUntilAfterGst) {
  NetworkConfig cfg;
  cfg.delay_max = 3;
  cfg.gst = 50;
  Cluster c(2, cfg);
  c.net.inject_fault({c.ids[0], Behavior::DelayMax, 0, std::nullopt});
  EXPECT_EQ(c.net.send(c.ids[0], {c.ids[1], {0}, "x"})->deliver_at, 53u);
  EXPECT_EQ(c.net.send(c.ids[1], {c.ids[0], {0}, "x"})->deliver_at, 1u);
}

TEST(Send, PreGstMessagesArriveByGstPlusBound) {
  NetworkConfig cfg;
  cfg.delay_max = 4;
  cfg.async_delay_max = 1000;
  cfg.gst = 30;
  cfg.seed = 3;
  Cluster c(2, cfg);
  for (int i = 0; i < 300; ++i) ASSERT_LE(c.net.send(c.ids[0], {c.ids[1], {0}, "x"})->deliver_at, 34u);
}

TEST(Faults, ConflictsAndScope) {
  Cluster c(2, NetworkConfig{}, "inst-1");
  c.net.inject_fault({c.ids[0], Behavior::Crash, 3, std::nullopt});
  EXPECT_THROW(c.net.inject_fault({c.ids[0], Behavior::DropAll, 0, std::nullopt}), Error);
  c.net.inject_fault({c.ids[1], Behavior::Crash, 0, std::string("other")});
  EXPECT_FALSE(c.net.crashed(c.ids[1], 10));
  EXPECT_FALSE(c.net.crashed(c.ids[0], 2));
  EXPECT_TRUE(c.net.crashed(c.ids[0], 3));
  EXPECT_EQ(c.net.faults().size(), 1u);
}

TEST(Config, Validation) {
  NetworkConfig bad;
  bad.delay_min = 5;
  bad.delay_max = 2;
  EXPECT_THROW(bad.validate(), Error);
  NetworkConfig rate;
  rate.drop_rate = 1.5;
  EXPECT_THROW(rate.validate(), Error);
}

TEST(Run, EmptyNetworkIsQuiescentAtZero) {
  Cluster c(3, NetworkConfig{});
  auto t = c.net.run_until(1000);
  EXPECT_TRUE(t.lines.empty());
  EXPECT_EQ(t.status, RunStatus::Quiescent);
  EXPECT_EQ(t.end_tick, 0u);
}

TEST(Run, TimersFireAtLeastOneTickLater) {
  Sleeper s;
  Network net(NetworkConfig{});
  net.add_node(NodeId("s"), s);
  net.inject(10, NodeId("s"), {0}, "zero");
  net.inject(10, NodeId("s"), {4}, "four");
  auto t = net.run_until(100);
  EXPECT_EQ(s.fired_ids.size(), 2u);
  EXPECT_EQ(t.end_tick, 14u);
  EXPECT_NE(t.text().find("11 "), std::string::npos);
}

TEST(Run, BudgetExhaustionIsMarked) {
  Cluster c(3, NetworkConfig{});
  c.net.inject(0, c.ids[0], {50}, "go");
  auto t = c.net.run_until(5);
  EXPECT_EQ(t.status, RunStatus::BudgetExhausted);
  EXPECT_NE(t.lines.back().find("BUDGET-EXHAUSTED"), std::string::npos);
  const auto& m = c.net.metrics();
  EXPECT_GT(m.in_flight, 0u);
  EXPECT_EQ(m.sent, m.delivered + m.dropped + m.in_flight);
}

TEST(Run, EventsProcessedInTotalOrder) {
  NetworkConfig cfg;
  cfg.delay_max = 6;
  cfg.seed = 12;
  Cluster c(4, cfg);
  c.net.inject(0, c.ids[0], {3}, "go");
  auto t = c.net.run_until(1000);
  std::pair<Tick, std::uint64_t> prev{0, 0};
  bool first = true;
  for (const auto& line : t.lines) {
    std::istringstream in(line);
    Tick tick;
    std::uint64_t seq;
    in >> tick >> seq;
    if (line.find(" drop:") != std::string::npos) continue;
    if (!first) EXPECT_LT(prev, std::make_pair(tick, seq)) << line;
    prev = {tick, seq};
    first = false;
  }
  EXPECT_EQ(c.net.metrics().sent, c.net.metrics().delivered + c.net.metrics().dropped);
}

TEST(Run, IdenticalSetupsGiveIdenticalTraces) {
  auto once = [] {
    NetworkConfig cfg;
    cfg.delay_max = 8;
    cfg.drop_rate = 0.1;
    cfg.seed = 2024;
    Cluster c(5, cfg);
    c.net.inject_fault({c.ids[2], Behavior::Crash, 4, std::nullopt});
    c.net.inject(0, c.ids[0], {3}, "go");
    return c.net.run_until(500).text();
  };
  const auto a = once();
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, once());
}

TEST(Run, CrashedReceiverNeitherRunsNorEmits) {
  Cluster c(3, NetworkConfig{});
  c.net.inject_fault({c.ids[1], Behavior::Crash, 0, std::nullopt});
  c.net.inject(2, c.ids[0], {2}, "go");
  auto t = c.net.run_until(100);
  EXPECT_EQ(c.procs[1]->received, 0);
  for (const auto& line : t.lines) {
    std::istringstream in(line);
    std::string tick, seq, from;
    in >> tick >> seq >> from;
    if (from == "n1") EXPECT_NE(line.find(" drop:"), std::string::npos) << line;
  }
}
