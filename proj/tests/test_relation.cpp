#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mapnet/gradcheck.hpp"
#include "mapnet/matrix.hpp"
#include "mapnet/relation.hpp"
#include "mapnet/rng.hpp"

using namespace mapnet;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    return m;
}

// standalone per-vector evaluation of the transfer network
std::vector<double> mlp_vector_oracle(const Mlp& m, const double* x) {
    std::vector<double> h(m.hidden_dim()), y(m.out_dim());
    for (int j = 0; j < m.hidden_dim(); ++j) {
        double acc = m.b1(0, j);
        for (int i = 0; i < m.in_dim(); ++i) acc += x[i] * m.w1(i, j);
        h[j] = acc > 0.0 ? acc + std::log1p(std::exp(-acc)) : std::log1p(std::exp(acc));
    }
    for (int j = 0; j < m.out_dim(); ++j) {
        double acc = m.b2(0, j);
        for (int i = 0; i < m.hidden_dim(); ++i) acc += h[i] * m.w2(i, j);
        y[j] = acc;
    }
    return y;
}

} // namespace

TEST_CASE("relation_map: identical rows give all-zero vectors") {
    Matrix z(3, 4, 2.5);
    RelationMap r = relation_map(z, 2);
    CHECK(max_abs(r.vectors) == 0.0);
    CHECK(r.node_count == 3);
    CHECK(r.support_count == 2);
    CHECK(r.complete());
}

TEST_CASE("relation_map: squared gaps") {
    Matrix z{{1, 0}, {0, 2}};
    RelationMap r = relation_map(z, 1);
    CHECK(r.vec(0, 1)[0] == 1.0);
    CHECK(r.vec(0, 1)[1] == 4.0);
    CHECK(r.vec(1, 0)[0] == 1.0);
    CHECK(r.vec(0, 0)[0] == 0.0);
}

TEST_CASE("relation_map: l1 norm equals squared Euclidean distance") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(24));
        const int c = 1 + static_cast<int>(rng.uniform_int(31));
        Matrix z = random_matrix(n, c, rng, 1.7);
        RelationMap r = relation_map(z, 1);
        Matrix d2 = pairwise_sq_distances(z);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double l1 = 0.0;
                for (int k = 0; k < c; ++k) {
                    CHECK(r.vec(i, j)[k] >= 0.0);
                    CHECK(r.vec(i, j)[k] == r.vec(j, i)[k]);
                    l1 += r.vec(i, j)[k];
                }
                CHECK(std::abs(l1 - d2(i, j)) <= 1e-12);
            }
    }
}

TEST_CASE("relation_map validates support_count") {
    Matrix z(3, 2, 1.0);
    CHECK_THROWS_AS(relation_map(z, 0), InvalidInputError);
    CHECK_THROWS_AS(relation_map(z, 4), InvalidInputError);
    CHECK_THROWS_AS(relation_map(Matrix(), 1), InvalidInputError);
}

TEST_CASE("semantic_support_relations: identical attributes give a zero block") {
    Matrix za(4, 3, 1.0);
    RelationMap r = semantic_support_relations(za);
    CHECK(r.support_block_only);
    CHECK(!r.complete());
    CHECK(max_abs(r.vectors) == 0.0);
}

TEST_CASE("semantic_support_relations: 1-shot 2-way unit example") {
    Matrix za{{1, 0}, {0, 1}};
    RelationMap r = semantic_support_relations(za);
    CHECK(r.vec(0, 1)[0] == 1.0);
    CHECK(r.vec(0, 1)[1] == 1.0);
}

TEST_CASE("semantic_support_relations matches the restriction of a full map") {
    Rng rng(32);
    Matrix z = random_matrix(6, 5, rng);
    Matrix z_sup(4, 5);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) z_sup(i, j) = z(i, j);
    RelationMap full = relation_map(z, 4);
    RelationMap block = semantic_support_relations(z_sup);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 5; ++k) CHECK(block.vec(i, j)[k] == full.vec(i, j)[k]);
}

TEST_CASE("semantic_support_relations rejects empty input") {
    CHECK_THROWS_AS(semantic_support_relations(Matrix()), InvalidEpisodeError);
}

TEST_CASE("transfer_relations: exact identity hook preserves the map") {
    Rng rng(33);
    Matrix z = random_matrix(4, 3, rng);
    RelationMap r = relation_map(z, 2);
    RelationMap t = transfer_relations(TransferModule::exact_identity(3), r);
    CHECK(t.vectors.bitwise_equal(r.vectors));
}

TEST_CASE("transfer_relations: zero map sends every vector to b2 and zeroes the diagonal") {
    Rng rng(34);
    Matrix z = random_matrix(3, 2, rng);
    RelationMap r = relation_map(z, 2);
    TransferModule h;
    h.net.w1 = Matrix(2, 4);
    h.net.b1 = Matrix(1, 4);
    h.net.w2 = Matrix(4, 2);
    h.net.b2 = Matrix(1, 2); // all zeros: output identically zero
    RelationMap t = transfer_relations(h, r);
    CHECK(max_abs(t.vectors) == 0.0);
}

TEST_CASE("transfer_relations: per-vector oracle, diagonal forced to zero") {
    Rng rng(35);
    Matrix z = random_matrix(4, 3, rng);
    RelationMap r = relation_map(z, 2);
    TransferModule h = TransferModule::make(3, rng);
    RelationMap t = transfer_relations(h, r);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (i == j) {
                for (int k = 0; k < 3; ++k) CHECK(t.vec(i, j)[k] == 0.0);
            } else {
                const auto want = mlp_vector_oracle(h.net, r.vec(i, j));
                for (int k = 0; k < 3; ++k)
                    CHECK(std::abs(t.vec(i, j)[k] - want[k]) <= 1e-12);
            }
        }
}

TEST_CASE("transfer_relations validates dimensions and completeness") {
    Rng rng(36);
    Matrix z = random_matrix(3, 4, rng);
    RelationMap r = relation_map(z, 2);
    TransferModule wrong = TransferModule::make(5, rng);
    CHECK_THROWS_AS(transfer_relations(wrong, r), InvalidInputError);
    RelationMap block = semantic_support_relations(random_matrix(3, 4, rng));
    CHECK_THROWS_AS(transfer_relations(TransferModule::make(4, rng), block),
                    IncompleteRelationMapError);
}

TEST_CASE("rg_loss: equal blocks give zero") {
    Rng rng(37);
    Matrix za = random_matrix(3, 4, rng);
    RelationMap a = semantic_support_relations(za);
    CHECK(rg_loss(a, a) == 0.0);
}

TEST_CASE("rg_loss: single off-diagonal pair example") {
    // two nodes, c = 2, transferred vector [1,1] against semantic [0,0]
    RelationMap t;
    t.node_count = t.support_count = 2;
    t.dim = 2;
    t.vectors = Matrix{{0, 0}, {1, 1}, {1, 1}, {0, 0}};
    RelationMap a = t;
    a.vectors = Matrix(4, 2);
    CHECK(rg_loss(t, a) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rg_loss: scalar double-loop oracle") {
    Rng rng(38);
    Matrix zv = random_matrix(5, 3, rng);
    Matrix za = random_matrix(5, 3, rng);
    RelationMap rv = relation_map(zv, 5);
    RelationMap ra = semantic_support_relations(za);
    const double got = rg_loss(rv, ra);
    double want = 0.0;
    int pairs = 0;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            if (i == j) continue;
            double pair = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double d = rv.vec(i, j)[k] - ra.vec(i, j)[k];
                pair += d * d;
            }
            want += pair / 3.0;
            ++pairs;
        }
    want /= pairs;
    CHECK(std::abs(got - want) <= 1e-12);
    CHECK(got >= 0.0);
}

TEST_CASE("rg_loss rejects singleton supports") {
    RelationMap one;
    one.node_count = one.support_count = 1;
    one.dim = 2;
    one.vectors = Matrix(1, 2);
    CHECK_THROWS_AS(rg_loss(one, one), InsufficientPairsError);
}

TEST_CASE("gradient of rg_loss through the transfer module") {
    Rng rng(39);
    const int c = 3, nk = 3;
    Matrix zv = random_matrix(nk, c, rng);
    Matrix za = random_matrix(nk, c, rng);
    TransferModule h = TransferModule::make(c, rng);

    ScalarFn fn = [&](Tape& t, const std::vector<Var>& v) {
        MlpVars hv{v[0], v[1], v[2], v[3]};
        Var rv = detail::pairwise_relation_vectors(t, t.constant(zv));
        Var ra = detail::pairwise_relation_vectors(t, t.constant(za));
        Var rt = transfer_relations(t, hv, rv, nk);
        return rg_loss(t, rt, ra, nk);
    };
    const double err =
        finite_diff_check(fn, {h.net.w1, h.net.b1, h.net.w2, h.net.b2});
    CHECK(err <= 1e-4);
}
