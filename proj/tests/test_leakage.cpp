#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "hsbt/audit.hpp"
#include "hsbt/leakage.hpp"
#include "test_support.hpp"

using namespace hsbt;
using namespace hsbt::test;

namespace {

using Edges = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

// Keys 1..9 with b = 3, inserted in order. By hand:
//
//                 6:[5]
//          2:[3]          5:[7 9]
//      0:[1 2] 1:[3 4]  3:[5 6] 4:[7 8] 7:[9]
std::vector<KeyValue> desk_pairs() {
  std::vector<KeyValue> p;
  for (SearchKey k = 1; k <= 9; ++k) p.push_back({k, Bytes{static_cast<std::uint8_t>(k)}});
  return p;
}

std::vector<std::uint32_t> identity_slots(std::size_t n) {
  std::vector<std::uint32_t> s(n);
  std::iota(s.begin(), s.end(), 0u);
  return s;
}

std::vector<SearchKey> live_keys(const PlainNode& n) { return {n.keys.begin(), n.keys.begin() + n.key_count}; }

}  // namespace

TEST_CASE("desk tree has the hand-derived shape") {
  const PlainTree t = build_tree(desk_pairs(), 3, 1);
  REQUIRE(t.node_count() == 8);
  CHECK(t.root_id == 6);
  CHECK(t.height == 3);
  CHECK(live_keys(t.nodes[6]) == std::vector<SearchKey>{5});
  CHECK(live_keys(t.nodes[2]) == std::vector<SearchKey>{3});
  CHECK(live_keys(t.nodes[5]) == std::vector<SearchKey>{7, 9});
  CHECK(live_keys(t.nodes[0]) == std::vector<SearchKey>{1, 2});
  CHECK(live_keys(t.nodes[1]) == std::vector<SearchKey>{3, 4});
  CHECK(live_keys(t.nodes[3]) == std::vector<SearchKey>{5, 6});
  CHECK(live_keys(t.nodes[4]) == std::vector<SearchKey>{7, 8});
  CHECK(live_keys(t.nodes[7]) == std::vector<SearchKey>{9});
  CHECK(t.nodes[6].child_ids[0] == 2);
  CHECK(t.nodes[6].child_ids[1] == 5);
  CHECK(t.nodes[5].child_ids[2] == 7);
}

TEST_CASE("node leakage on the desk tree") {
  const auto pairs = desk_pairs();
  const PlainTree t = build_tree(pairs, 3, 1);
  const auto slots = identity_slots(8);

  SUBCASE("mid range [4,6]") {
    for (LeakageScope scope : {LeakageScope::Formal, LeakageScope::Probe}) {
      const HwLeakage l = leak_hw_nodes(t, slots, {4, 6}, scope);
      CHECK(l.access.root == 6);
      CHECK(l.access.vertices == std::vector<std::uint32_t>{1, 2, 3, 5, 6});
      CHECK(l.access.edges == Edges{{2, 1}, {5, 3}, {6, 2}, {6, 5}});
      REQUIRE(l.values.entries.size() == 2);
      CHECK(l.values.entries[0].first == 1);
      CHECK(l.values.entries[0].second == std::vector<std::uint32_t>{t.value_slot[3]});
      CHECK(l.values.entries[1].first == 3);
      std::vector<std::uint32_t> v3{t.value_slot[4], t.value_slot[5]};
      std::sort(v3.begin(), v3.end());
      CHECK(l.values.entries[1].second == v3);
    }
  }
  SUBCASE("no-result range [10,12]: formal X is empty, the probe path is not") {
    const HwLeakage formal = leak_hw_nodes(t, slots, {10, 12}, LeakageScope::Formal);
    CHECK(formal.access.vertices.empty());
    const HwLeakage probe = leak_hw_nodes(t, slots, {10, 12}, LeakageScope::Probe);
    CHECK(probe.access.vertices == std::vector<std::uint32_t>{5, 6, 7});
    CHECK(probe.access.edges == Edges{{5, 7}, {6, 5}});
    CHECK(probe.values.entries.empty());
  }
  SUBCASE("full range is the entire tree") {
    const HwLeakage l = leak_hw_nodes(t, slots, {kNegInfKey, kPosInfKey});
    CHECK(l.access.vertices == identity_slots(8));
    CHECK(l.access.edges.size() == 7);
    CHECK(l.values.pointer_union() == identity_slots(9));
  }
  SUBCASE("slots relabel vertices") {
    std::vector<std::uint32_t> perm{3, 7, 0, 5, 1, 2, 6, 4};
    const HwLeakage l = leak_hw_nodes(t, perm, {4, 6});
    CHECK(l.access.root == perm[6]);
    CHECK(l.access.vertices == std::vector<std::uint32_t>{0, 2, 5, 6, 7});
    CHECK(l.access.has_edge(perm[2], perm[1]));
  }
}

TEST_CASE("page leakage on the desk tree") {
  const PlainTree t = build_tree(desk_pairs(), 3, 1);
  SUBCASE("all nodes in one page") {
    const HwLeakage p = leak_hw_pages(t, identity_slots(8), {4, 6}, PageLayout{10, 4096});
    CHECK(p.access.vertices == std::vector<std::uint32_t>{0});
    CHECK(p.access.edges.empty());
    CHECK(p.access.root == 0);
  }
  SUBCASE("inner levels on page 0, leaves on page 1 and 2") {
    // Slots: inner 6, 2, 5 -> 0, 1, 2; leaves 0, 1, 3, 4, 7 -> 3 .. 7.
    const std::vector<std::uint32_t> slots{3, 4, 1, 5, 6, 2, 0, 7};
    const HwLeakage p = leak_hw_pages(t, slots, {4, 6}, PageLayout{1, 3});
    CHECK(p.access.vertices == std::vector<std::uint32_t>{0, 1});
    CHECK(p.access.edges == Edges{{0, 1}});
  }
  SUBCASE("random tree: P is the page image of X") {
    const auto pairs = random_pairs(3000, 31);
    const PlainTree rt = build_tree(pairs, 6, 2);
    const auto slot_of = node_slots(pse_gen(), static_cast<std::uint32_t>(rt.node_count()));
    const PageLayout layout{node_plain_size(6, false), 4096};
    Csprng rng(7);
    for (int q = 0; q < 100; ++q) {
      const KeyRange r = random_range(rng);
      const HwLeakage x = leak_hw_nodes(rt, slot_of, r);
      const HwLeakage p = leak_hw_pages(rt, slot_of, r, layout);
      std::set<std::uint32_t> pv;
      std::set<std::pair<std::uint32_t, std::uint32_t>> pe;
      for (std::uint32_t v : x.access.vertices) pv.insert(static_cast<std::uint32_t>(v * layout.record_size / 4096));
      for (auto [a, b] : x.access.edges) {
        const auto pa = static_cast<std::uint32_t>(a * layout.record_size / 4096);
        const auto pb = static_cast<std::uint32_t>(b * layout.record_size / 4096);
        if (pa != pb) pe.insert({pa, pb});
      }
      CHECK(std::vector<std::uint32_t>(pv.begin(), pv.end()) == p.access.vertices);
      CHECK(Edges(pe.begin(), pe.end()) == p.access.edges);
      CHECK(p.values.pointer_union() == x.values.pointer_union());
    }
  }
}

TEST_CASE("probe scope contains the formal scope") {
  const auto pairs = random_pairs(4000, 32);
  const PlainTree t = build_tree(pairs, 5, 2);
  const auto slots = identity_slots(t.node_count());
  Csprng rng(8);
  std::size_t strictly_larger = 0;
  for (int q = 0; q < 300; ++q) {
    const KeyRange r = random_range(rng);
    const HwLeakage f = leak_hw_nodes(t, slots, r, LeakageScope::Formal);
    const HwLeakage p = leak_hw_nodes(t, slots, r, LeakageScope::Probe);
    CHECK(std::includes(p.access.vertices.begin(), p.access.vertices.end(), f.access.vertices.begin(),
                        f.access.vertices.end()));
    CHECK(p.values.pointer_union() == f.values.pointer_union());
    CHECK(p.values.pointer_union() == oracle_pointers(pairs, t, r));
    strictly_larger += p.access.vertices.size() > f.access.vertices.size();
  }
  CHECK(strictly_larger > 0);
}

TEST_CASE("leak_enc") {
  const std::vector<KeyValue> one{{5, Bytes(11, 0)}};
  const PlainTree t1 = build_tree(one, 4, 0);
  const LeakEnc l1 = leak_enc(one, t1);
  CHECK(l1.value_count == 1);
  CHECK(l1.value_sizes == std::vector<std::uint64_t>{11});
  CHECK(l1.node_count == 1);

  std::vector<KeyValue> nine;
  for (SearchKey k = 1; k <= 9; ++k) nine.push_back({k, Bytes(k, 1)});
  const PlainTree t9 = build_tree(nine, 4, 3);
  const LeakEnc l9 = leak_enc(nine, t9);
  CHECK(l9.node_count == t9.node_count());
  const EncryptedIndex idx = encrypt_index(SecretKey::generate(), t9, nine, true);
  CHECK(leak_enc(idx) == l9);
}

TEST_CASE("auditor on live traces") {
  const auto pairs = random_pairs(3000, 33);
  Fixture fx(pairs, 6, false);
  fx.enclave->load_tree_c1(fx.index);
#ifdef HSBT_SEED_HOOK
  fx.enclave->set_shuffle_seed(99);
#endif
  const AuditSetup setup = AuditSetup::from_index(fx.index, *fx.enclave, fx.sk.tree);
  const Client client = fx.client();
  Csprng rng(9);

  SUBCASE("honest runs pass") {
    for (int c : {1, 2}) {
      for (int q = 0; q < 100; ++q) {
        const KeyRange r = random_range(rng);
        const AuditOutcome o = audit_one(setup, client, c, r, false, rng);
        CAPTURE(c);
        CAPTURE(o.verdict.reason);
        REQUIRE(o.verdict.pass);
      }
    }
  }
  SUBCASE("an injected fetch fails at that event") {
    for (int q = 0; q < 50; ++q) {
      const KeyRange r = random_range(rng);
      const AuditOutcome honest = audit_one(setup, client, 2, r, false, rng);
      REQUIRE(honest.verdict.pass);
      std::uint32_t outside = 0;
      while (honest.leakage.access.has_vertex(outside)) ++outside;
      const std::size_t at = rng.uniform(honest.trace.size() + 1);
      AccessTrace bad = honest.trace;
      bad.inject(at, TraceEvent{TraceEventKind::NodeFetch, outside, {}});
      const Verdict v = audit_query(bad, honest.leakage, Granularity::Node);
      CHECK_FALSE(v.pass);
      CHECK(v.event_index == std::optional<std::size_t>(at));
    }
    for (int c : {1, 2}) {
      const AuditOutcome o = audit_one(setup, client, c, random_range(rng), true, rng);
      CHECK_FALSE(o.verdict.pass);
    }
  }
  SUBCASE("a trace does not pass against another range's leakage") {
    int compared = 0;
    for (int q = 0; q < 50; ++q) {
      const KeyRange r1 = random_range(rng);
      const KeyRange r2 = random_range(rng);
      const AuditOutcome o = audit_one(setup, client, 2, r1, false, rng);
      const HwLeakage other = leak_hw_nodes(setup.tree, setup.slot_of, r2, setup.scope);
      if (other.access.vertices == o.leakage.access.vertices &&
          other.values.pointer_union() == o.leakage.values.pointer_union())
        continue;
      ++compared;
      CHECK_FALSE(audit_query(o.trace, other, Granularity::Node).pass);
    }
    CHECK(compared > 40);
  }
  SUBCASE("formal scope rejects a no-result probe, probe scope accepts it") {
    AuditSetup formal = setup;
    formal.scope = LeakageScope::Formal;
    const KeyRange empty{(1u << 24) + 10, (1u << 24) + 20};
    CHECK(audit_one(setup, client, 2, empty, false, rng).verdict.pass);
    CHECK_FALSE(audit_one(formal, client, 2, empty, false, rng).verdict.pass);
    CHECK(audit_one(setup, client, 1, empty, false, rng).verdict.pass);
  }
}

TEST_CASE("auditor on synthetic traces") {
  const PlainTree t = build_tree(desk_pairs(), 3, 1);
  const auto slots = identity_slots(8);
  const HwLeakage l = leak_hw_nodes(t, slots, {4, 6});
  const std::uint32_t v4 = t.value_slot[3], v5 = t.value_slot[4], v6 = t.value_slot[5];

  const auto honest = [&] {
    AccessTrace tr;
    tr.record_fetch(6);
    tr.record_pointers({{false, 5}, {false, 2}});
    tr.record_fetch(2);
    tr.record_fetch(5);
    tr.record_pointers({{false, 3}, {false, 1}});
    tr.record_fetch(1);
    tr.record_fetch(3);
    tr.record_pointers({{true, v6}, {true, v4}, {true, v5}});
    return tr;
  };
  CHECK(audit_query(honest(), l, Granularity::Node).pass);

  SUBCASE("child fetched in the same batch as its parent") {
    AccessTrace tr;
    tr.record_fetch(6);
    tr.record_fetch(2);
    const Verdict v = audit_query(tr, l, Granularity::Node);
    CHECK_FALSE(v.pass);
    CHECK(v.event_index == std::optional<std::size_t>(1));
  }
  SUBCASE("missing fetch") {
    AccessTrace tr;
    tr.record_fetch(6);
    tr.record_pointers({{false, 5}, {false, 2}});
    tr.record_fetch(2);
    tr.record_pointers({{false, 1}});
    tr.record_fetch(1);
    tr.record_pointers({{true, v4}});
    const Verdict v = audit_query(tr, l, Granularity::Node);
    CHECK_FALSE(v.pass);
    CHECK(v.event_index == std::optional<std::size_t>(tr.size()));
  }
  SUBCASE("extra value pointer") {
    AccessTrace tr = honest();
    tr.record_pointers({{true, t.value_slot[0]}});
    CHECK_FALSE(audit_query(tr, l, Granularity::Node).pass);
  }
  SUBCASE("duplicate fetch") {
    AccessTrace tr = honest();
    tr.inject(3, TraceEvent{TraceEventKind::NodeFetch, 2, {}});
    const Verdict v = audit_query(tr, l, Granularity::Node);
    CHECK_FALSE(v.pass);
    CHECK(v.event_index == std::optional<std::size_t>(3));
  }
  SUBCASE("first fetch must be the root") {
    AccessTrace tr;
    tr.record_fetch(2);
    CHECK_FALSE(audit_query(tr, l, Granularity::Node).pass);
  }
  SUBCASE("page traces") {
    const HwLeakage p = leak_hw_pages(t, std::vector<std::uint32_t>{3, 4, 1, 5, 6, 2, 0, 7}, {4, 6}, PageLayout{1, 3});
    AccessTrace ok;
    ok.record_page(0);
    ok.record_page(0);
    ok.record_page(0);
    ok.record_page(1);
    ok.record_page(1);
    ok.record_pointers({{true, v5}, {true, v6}, {true, v4}});
    CHECK(audit_query(ok, p, Granularity::Page).pass);
    AccessTrace leaf_first;
    leaf_first.record_page(1);
    CHECK_FALSE(audit_query(leaf_first, p, Granularity::Page).pass);
    AccessTrace stray = ok;
    stray.inject(2, TraceEvent{TraceEventKind::PageTouch, 2, {}});
    const Verdict v = audit_query(stray, p, Granularity::Page);
    CHECK_FALSE(v.pass);
    CHECK(v.event_index == std::optional<std::size_t>(2));
    CHECK_FALSE(audit_query(ok, p, Granularity::Node).pass);
  }
  SUBCASE("text forms") {
    const AccessTrace tr = honest();
    CHECK(AccessTrace::from_text(tr.to_text()).events() == tr.events());
    const std::string text = to_text(l);
    CHECK(text.find("root 6\n") == 0);
    CHECK(text.find("edge 6 5\n") != std::string::npos);
    CHECK(text.find("vertex 3\n") != std::string::npos);
  }
}
