#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "iosicp/rng.hpp"
#include "iosicp/selection.hpp"

using namespace iosicp;

namespace {

FeatureGrid random_grid(int c, int h, int w, Rng& rng) {
    FeatureGrid g(c, h, w, 1.0f, 0.0f, 0.0f);
    for (auto& v : g.data) v = static_cast<float>(rng.uniform(-1.0, 1.5));
    return g;
}

SparseMap map_from_bits(int h, int w, std::initializer_list<int> ones) {
    SparseMap m;
    m.height = h;
    m.width = w;
    m.bits.assign(static_cast<std::size_t>(h) * w, 0);
    for (int i : ones) m.bits[i] = 1;
    return m;
}

CollabNode node_with(int id, double occ, double latency, double overlap, bool ego = false) {
    CollabNode n;
    n.agent_id = id;
    n.occupied_fraction = occ;
    n.latency_s = latency;
    n.overlap_with_ego = overlap;
    n.is_ego = ego;
    return n;
}

}  // namespace

TEST_CASE("extract_sparse_map zero grid") {
    FeatureGrid g(2, 3, 3, 1.0f, 0.0f, 0.0f);
    const SparseMap m = extract_sparse_map(g, 0.5);
    CHECK(m.count_ones() == 0);
}

TEST_CASE("extract_sparse_map single activation") {
    FeatureGrid g(3, 4, 4, 1.0f, 0.0f, 0.0f);
    g.at(1, 2, 3) = 1.0f;
    const SparseMap m = extract_sparse_map(g, 0.5);
    CHECK(m.count_ones() == 1);
    CHECK(m.bits[2 * 4 + 3] == 1);
}

TEST_CASE("extract_sparse_map matches brute-force channel max and is binary") {
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        const int c = 1 + static_cast<int>(rng.uniform_index(4));
        const int h = 1 + static_cast<int>(rng.uniform_index(6));
        const int w = 1 + static_cast<int>(rng.uniform_index(6));
        const FeatureGrid g = random_grid(c, h, w, rng);
        const double thr = rng.uniform(-0.5, 1.0);
        const SparseMap m = extract_sparse_map(g, thr);
        for (int hh = 0; hh < h; ++hh)
            for (int ww = 0; ww < w; ++ww) {
                double mx = -1e300;
                for (int cc = 0; cc < c; ++cc)
                    mx = std::max(mx, static_cast<double>(g.at(cc, hh, ww)));
                const std::uint8_t expect = mx > thr ? 1 : 0;
                CHECK(m.bits[static_cast<std::size_t>(hh) * w + ww] == expect);
                CHECK((m.bits[static_cast<std::size_t>(hh) * w + ww] == 0 ||
                       m.bits[static_cast<std::size_t>(hh) * w + ww] == 1));
            }
    }
}

TEST_CASE("overlap and occupancy summaries") {
    const SparseMap ego = map_from_bits(2, 2, {0, 1});
    const SparseMap other = map_from_bits(2, 2, {1, 2});
    CHECK(occupied_fraction(ego) == 0.5);
    CHECK(overlap_with_ego(other, ego) == 0.5);  // one shared bit of two ego bits
    const SparseMap empty = map_from_bits(2, 2, {});
    CHECK(overlap_with_ego(other, empty) == 0.0);  // max(1, |ego|) guards the ratio
}

TEST_CASE("gnn_enhanced_weights empty neighbor set") {
    std::vector<CollabNode> nodes{node_with(0, 0.5, 0.0, 1.0, true)};
    const EnhancedWeights w = gnn_enhanced_weights(nodes, gnn_test_params());
    CHECK(w.by_agent.empty());
}

TEST_CASE("gnn_enhanced_weights identical neighbors get identical weights") {
    std::vector<CollabNode> nodes{node_with(0, 0.5, 0.0, 1.0, true),
                                  node_with(1, 0.25, 0.0, 0.25),
                                  node_with(2, 0.25, 0.0, 0.25)};
    const EnhancedWeights w = gnn_enhanced_weights(nodes, gnn_test_params());
    REQUIRE(w.by_agent.size() == 2);
    CHECK(w.by_agent.at(1) == w.by_agent.at(2));
}

TEST_CASE("gnn_enhanced_weights matches the hand-stepped reference") {
    // Published test parameters; ego features [0.5, 0, 1.0], one neighbor
    // with features [0.25, 0.0, 0.25]. Expected value from stepping the
    // two-round recurrence by hand in 64-bit.
    std::vector<CollabNode> nodes{node_with(0, 0.5, 0.0, 1.0, true),
                                  node_with(7, 0.25, 0.0, 0.25)};
    const EnhancedWeights w = gnn_enhanced_weights(nodes, gnn_test_params());
    REQUIRE(w.by_agent.size() == 1);
    CHECK(w.by_agent.at(7) == Catch::Approx(0.8419343039942636).epsilon(1e-12));
}

TEST_CASE("gnn_enhanced_weights is permutation equivariant") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<CollabNode> nodes{node_with(0, rng.uniform(0, 1), 0.0, 1.0, true)};
        const int n = 2 + static_cast<int>(rng.uniform_index(4));
        for (int i = 0; i < n; ++i)
            nodes.push_back(node_with(10 + i, rng.uniform(0, 1), rng.uniform(0, 0.5),
                                      rng.uniform(0, 1)));
        const EnhancedWeights a = gnn_enhanced_weights(nodes, gnn_default_params());
        std::vector<CollabNode> shuffled = nodes;
        std::reverse(shuffled.begin() + 1, shuffled.end());
        const EnhancedWeights b = gnn_enhanced_weights(shuffled, gnn_default_params());
        for (const auto& [id, w] : a.by_agent) CHECK(b.by_agent.at(id) == w);
    }
}

TEST_CASE("gnn_enhanced_weights forces ego latency to zero") {
    std::vector<CollabNode> a{node_with(0, 0.5, 0.0, 1.0, true), node_with(1, 0.3, 0.1, 0.5)};
    std::vector<CollabNode> b{node_with(0, 0.5, 99.0, 1.0, true), node_with(1, 0.3, 0.1, 0.5)};
    b[0].latency_s = 99.0;
    CHECK(gnn_enhanced_weights(a, gnn_default_params()).by_agent.at(1) ==
          gnn_enhanced_weights(b, gnn_default_params()).by_agent.at(1));
}

TEST_CASE("gnn_enhanced_weights validates the ego count") {
    std::vector<CollabNode> none{node_with(1, 0.3, 0.1, 0.5)};
    CHECK_THROWS_AS(gnn_enhanced_weights(none, gnn_default_params()), GraphError);
    std::vector<CollabNode> two{node_with(0, 0.5, 0.0, 1.0, true),
                                node_with(1, 0.5, 0.0, 1.0, true)};
    CHECK_THROWS_AS(gnn_enhanced_weights(two, gnn_default_params()), GraphError);
}

TEST_CASE("default parameters satisfy the documented sign behavior") {
    // Fresh, overlapping neighbors score positive.
    for (double tau : {0.0, 0.05, 0.1, 0.15})
        for (double ov : {0.1, 0.3, 0.8}) {
            std::vector<CollabNode> nodes{node_with(0, 0.1, 0.0, 1.0, true),
                                          node_with(1, 0.05, tau, ov)};
            const auto w = gnn_enhanced_weights(nodes, gnn_default_params());
            CHECK(w.by_agent.at(1) > 0.0);
        }
    // Beyond 4 perception cycles with zero overlap scores negative.
    for (double tau : {0.41, 0.45, 0.6, 5.0})
        for (double occ : {0.0, 0.2, 1.0}) {
            std::vector<CollabNode> nodes{node_with(0, 0.1, 0.0, 1.0, true),
                                          node_with(1, occ, tau, 0.0)};
            const auto w = gnn_enhanced_weights(nodes, gnn_default_params());
            CHECK(w.by_agent.at(1) < 0.0);
        }
}

TEST_CASE("select_collaborators keeps strictly positive weights") {
    EnhancedWeights empty;
    CHECK(select_collaborators(empty).empty());

    EnhancedWeights zero;
    zero.by_agent[3] = 0.0;
    CHECK(select_collaborators(zero).empty());  // w <= 0 is pruned

    EnhancedWeights mixed;
    mixed.by_agent[3] = 0.3;
    mixed.by_agent[5] = -0.1;
    const auto sel = select_collaborators(mixed);
    REQUIRE(sel.size() == 1);
    CHECK(sel[0] == 3);
}

TEST_CASE("select_collaborators equals the direct filter oracle and is monotone") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        EnhancedWeights w;
        const int n = static_cast<int>(rng.uniform_index(6));
        for (int i = 0; i < n; ++i) w.by_agent[i] = rng.uniform(-1.0, 1.0);
        const auto sel = select_collaborators(w);
        std::vector<int> oracle;
        for (const auto& [id, v] : w.by_agent)
            if (v > 0.0) oracle.push_back(id);
        CHECK(sel == oracle);

        // Raising any weight never shrinks the selection.
        if (!w.by_agent.empty()) {
            EnhancedWeights raised = w;
            raised.by_agent.begin()->second += rng.uniform(0.0, 2.0);
            const auto sel2 = select_collaborators(raised);
            for (int id : sel)
                CHECK(std::find(sel2.begin(), sel2.end(), id) != sel2.end());
        }
    }
}

TEST_CASE("gnn parameter sets round trip through the text format") {
    ParamSet set = builtin_gnn_params();
    std::stringstream ss;
    write_params(set, ss);
    const ParamSet back = read_params(ss);
    REQUIRE(back.count("gnn.default") == 1);
    REQUIRE(back.count("gnn.test") == 1);
    CHECK(back.at("gnn.default") == set.at("gnn.default"));
    const GnnParams p = GnnParams::from_flat(back.at("gnn.test"));
    CHECK(p.readout_bias == gnn_test_params().readout_bias);
    CHECK(p.w_neighbor == gnn_test_params().w_neighbor);
}
