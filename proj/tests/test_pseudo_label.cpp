#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <queue>
#include <random>

#include "sraseg/pseudo_label.hpp"
#include "sraseg/rng.hpp"

using namespace sraseg;
using Catch::Approx;

namespace {

// independent flood-fill oracle: keep, per class, only the largest component
// (ties: the component containing the smallest row-major index)
HardLabelMap lcc_oracle(const HardLabelMap& in, int connectivity) {
    const int H = in.height, W = in.width;
    std::vector<int> comp(static_cast<std::size_t>(H) * W, -1);
    struct Comp {
        int cls, size, first;
    };
    std::vector<Comp> comps;
    for (int start = 0; start < H * W; ++start) {
        if (comp[start] != -1 || in.labels[start] == 0) continue;
        const int cls = in.labels[start];
        const int id = static_cast<int>(comps.size());
        comps.push_back({cls, 0, start});
        std::queue<int> q;
        q.push(start);
        comp[start] = id;
        while (!q.empty()) {
            int cur = q.front();
            q.pop();
            ++comps[id].size;
            int cy = cur / W, cx = cur % W;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    if (connectivity == 4 && dy != 0 && dx != 0) continue;
                    int ny = cy + dy, nx = cx + dx;
                    if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                    int nidx = ny * W + nx;
                    if (comp[nidx] == -1 && in.labels[nidx] == cls) {
                        comp[nidx] = id;
                        q.push(nidx);
                    }
                }
        }
    }
    std::map<int, int> winner;  // class -> comp id
    for (int id = 0; id < static_cast<int>(comps.size()); ++id) {
        auto it = winner.find(comps[id].cls);
        if (it == winner.end()) {
            winner[comps[id].cls] = id;
            continue;
        }
        const Comp& cur = comps[it->second];
        if (comps[id].size > cur.size ||
            (comps[id].size == cur.size && comps[id].first < cur.first))
            it->second = id;
    }
    HardLabelMap out = in;
    for (int i = 0; i < H * W; ++i)
        if (comp[i] != -1 && winner[comps[comp[i]].cls] != comp[i]) out.labels[i] = 0;
    return out;
}

HardLabelMap random_labels(int h, int w, int classes, std::mt19937_64& rng) {
    HardLabelMap m(h, w);
    std::uniform_int_distribution<int> d(0, classes - 1);
    for (auto& v : m.labels) v = d(rng);
    return m;
}

}  // namespace

TEST_CASE("ema update closed form") {
    EmaState<double> st;
    st.teacher = {1.0, -2.0, 0.5};
    st.decay = 0.99;
    ema_update(st, ParameterVector<double>{2.0, 0.0, 0.5});
    REQUIRE(st.teacher[0] == Approx(0.99 * 1.0 + 0.01 * 2.0).margin(1e-15));
    REQUIRE(st.teacher[1] == Approx(0.99 * -2.0).margin(1e-15));
    REQUIRE(st.teacher[2] == Approx(0.5).margin(1e-15));
}

TEST_CASE("ema update matches a scalar-loop oracle over many steps") {
    auto rng = make_stream(31, "test/ema");
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    EmaState<double> st;
    st.decay = 0.9;
    st.teacher.assign(16, 0.0);
    std::vector<double> oracle(16, 0.0);
    for (int step = 0; step < 50; ++step) {
        ParameterVector<double> student(16);
        for (auto& v : student) v = d(rng);
        ema_update(st, student);
        for (int i = 0; i < 16; ++i) oracle[i] = 0.9 * oracle[i] + 0.1 * student[i];
        for (int i = 0; i < 16; ++i) REQUIRE(st.teacher[i] == Approx(oracle[i]).margin(1e-12));
    }
}

TEST_CASE("ema rejects mismatched lengths and bad decay") {
    EmaState<double> st;
    st.teacher = {1.0};
    REQUIRE_THROWS(ema_update(st, ParameterVector<double>{1.0, 2.0}));
    st.decay = 1.0;
    REQUIRE_THROWS(ema_update(st, ParameterVector<double>{1.0}));
}

TEST_CASE("softmax hand values") {
    LogitMap l(2, 1, 1);
    l.at(0, 0, 0) = 1.0;
    l.at(1, 0, 0) = 0.0;
    SoftLabelMap p = softmax_probs(l);
    REQUIRE(p.at(0, 0, 0) == Approx(0.73105857863).margin(1e-10));
    REQUIRE(p.at(1, 0, 0) == Approx(0.26894142137).margin(1e-10));
}

TEST_CASE("softmax survives large logits via max subtraction") {
    LogitMap l(2, 1, 1);
    l.at(0, 0, 0) = 1000.0;
    l.at(1, 0, 0) = 0.0;
    SoftLabelMap p = softmax_probs(l);
    REQUIRE(std::isfinite(p.at(0, 0, 0)));
    REQUIRE(p.at(0, 0, 0) == Approx(1.0).margin(1e-12));
    REQUIRE(p.at(1, 0, 0) == Approx(0.0).margin(1e-12));
}

TEST_CASE("softmax rows sum to one on random logits") {
    auto rng = make_stream(32, "test/softmax");
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    LogitMap l(4, 6, 6);
    for (auto& v : l.data) v = d(rng);
    SoftLabelMap p = softmax_probs(l);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            double s = 0;
            for (int c = 0; c < 4; ++c) s += p.at(c, y, x);
            REQUIRE(s == Approx(1.0).margin(1e-12));
        }
}

TEST_CASE("argmax ties resolve to the lowest class index") {
    SoftLabelMap p(3, 1, 2, 0.0);
    p.at(0, 0, 0) = 0.4;
    p.at(1, 0, 0) = 0.4;
    p.at(2, 0, 0) = 0.2;
    p.at(1, 0, 1) = 0.5;
    p.at(2, 0, 1) = 0.5;
    HardLabelMap h = argmax_labels(p);
    REQUIRE(h.at(0, 0) == 0);
    REQUIRE(h.at(0, 1) == 1);
}

TEST_CASE("largest-component filter keeps one component per class") {
    // class 1: a 2x2 block and a single far pixel; class 2: one pixel
    HardLabelMap m(6, 6, 0);
    m.at(1, 1) = m.at(1, 2) = m.at(2, 1) = m.at(2, 2) = 1;
    m.at(5, 5) = 1;
    m.at(0, 5) = 2;
    HardLabelMap f = largest_component_filter(m, 8);
    REQUIRE(f.at(1, 1) == 1);
    REQUIRE(f.at(2, 2) == 1);
    REQUIRE(f.at(5, 5) == 0);  // smaller component removed
    REQUIRE(f.at(0, 5) == 2);  // other classes untouched
}

TEST_CASE("connectivity changes which pixels form one component") {
    // two diagonal pixels: one component under 8-connectivity, two under 4
    HardLabelMap m(4, 4, 0);
    m.at(0, 0) = 1;
    m.at(1, 1) = 1;
    m.at(3, 3) = 1;  // isolated single pixel, smaller either way
    HardLabelMap f8 = largest_component_filter(m, 8);
    REQUIRE(f8.at(0, 0) == 1);
    REQUIRE(f8.at(1, 1) == 1);
    REQUIRE(f8.at(3, 3) == 0);
    HardLabelMap f4 = largest_component_filter(m, 4);
    // all three are size-1; the earliest in row-major order wins
    REQUIRE(f4.at(0, 0) == 1);
    REQUIRE(f4.at(1, 1) == 0);
    REQUIRE(f4.at(3, 3) == 0);
}

TEST_CASE("size ties keep the component discovered first in row-major order") {
    HardLabelMap m(3, 5, 0);
    m.at(0, 3) = m.at(0, 4) = 1;  // first discovered
    m.at(2, 0) = m.at(2, 1) = 1;  // same size, later
    HardLabelMap f = largest_component_filter(m, 4);
    REQUIRE(f.at(0, 3) == 1);
    REQUIRE(f.at(0, 4) == 1);
    REQUIRE(f.at(2, 0) == 0);
    REQUIRE(f.at(2, 1) == 0);
}

TEST_CASE("largest-component filter matches the flood-fill oracle on random maps") {
    auto rng = make_stream(33, "test/lcc");
    for (int trial = 0; trial < 40; ++trial) {
        HardLabelMap m = random_labels(12, 12, 4, rng);
        for (int conn : {4, 8}) {
            HardLabelMap got = largest_component_filter(m, conn);
            HardLabelMap want = lcc_oracle(m, conn);
            REQUIRE(got.labels == want.labels);
        }
    }
}

TEST_CASE("largest-component filter is idempotent and only clears to background") {
    auto rng = make_stream(34, "test/lcc-prop");
    for (int trial = 0; trial < 20; ++trial) {
        HardLabelMap m = random_labels(10, 10, 3, rng);
        HardLabelMap once = largest_component_filter(m, 8);
        HardLabelMap twice = largest_component_filter(once, 8);
        REQUIRE(once.labels == twice.labels);
        for (std::size_t i = 0; i < m.labels.size(); ++i) {
            // each pixel keeps its class or becomes background
            const bool ok = once.labels[i] == m.labels[i] || once.labels[i] == 0;
            REQUIRE(ok);
        }
    }
}

TEST_CASE("one-hot round trip") {
    auto rng = make_stream(35, "test/onehot");
    HardLabelMap m = random_labels(7, 9, 5, rng);
    SoftLabelMap oh = one_hot(m, 5);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 9; ++x) {
            double s = 0;
            for (int c = 0; c < 5; ++c) s += oh.at(c, y, x);
            REQUIRE(s == 1.0);
            REQUIRE(oh.at(m.at(y, x), y, x) == 1.0);
        }
    REQUIRE(argmax_labels(oh).labels == m.labels);
    HardLabelMap bad(1, 1, 7);
    REQUIRE_THROWS(one_hot(bad, 5));
}

TEST_CASE("full pipeline emits one-hot maps consistent with its stages") {
    auto rng = make_stream(36, "test/pipeline");
    std::uniform_real_distribution<double> d(-3.0, 3.0);
    LogitMap l(3, 10, 10);
    for (auto& v : l.data) v = d(rng);
    SoftLabelMap pl = pseudo_label_from_logits(l, 8);
    HardLabelMap expect = largest_component_filter(argmax_labels(softmax_probs(l)), 8);
    REQUIRE(argmax_labels(pl).labels == expect.labels);
    for (double v : pl.data) REQUIRE((v == 0.0 || v == 1.0));
}
