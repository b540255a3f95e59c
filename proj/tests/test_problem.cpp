#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ftsim/distribution.hpp"
#include "ftsim/errors.hpp"
#include "ftsim/problem.hpp"
#include "oracles.hpp"

using namespace ftsim;

TEST_CASE("stencil matrix matches the brute-force enumeration") {
  for (int n : {1, 2, 3, 5}) {
    Problem p = make_poisson27(n);
    CHECK(p.global_rows == poisson27_rows(n));
    oracle::SeqMatrix got = oracle::seq_from_problem(p);
    oracle::SeqMatrix want = oracle::stencil_poisson27(n);
    REQUIRE(got.n == want.n);
    CHECK(got.row_ptr == want.row_ptr);
    CHECK(got.col == want.col);
    CHECK(got.val == want.val);
    CHECK(got.b == want.b);
    CHECK(static_cast<std::int64_t>(got.col.size()) == poisson27_nnz(n));
  }
}

TEST_CASE("blocks are pure and consistent with the whole") {
  Problem p = make_poisson27(3);
  oracle::SeqMatrix whole = oracle::seq_from_problem(p);
  auto dist = canonical_distribution(p.global_rows, 4);
  std::int64_t nnz_seen = 0;
  for (Rank r = 0; r < 4; ++r) {
    LocalProblem lp = p.block_of(dist.range_of(r));
    LocalProblem again = p.block_of(dist.range_of(r));
    CHECK(lp.a.col == again.a.col);
    CHECK(lp.a.val == again.a.val);
    nnz_seen += lp.a.nnz();
    // row content identical to the corresponding slice of the whole matrix
    for (std::int64_t i = 0; i < lp.a.rows.size(); ++i) {
      const std::int64_t g = lp.a.rows.begin + i;
      const std::int64_t w0 = whole.row_ptr[static_cast<std::size_t>(g)];
      const std::int64_t w1 = whole.row_ptr[static_cast<std::size_t>(g) + 1];
      const std::int64_t l0 = lp.a.row_ptr[static_cast<std::size_t>(i)];
      const std::int64_t l1 = lp.a.row_ptr[static_cast<std::size_t>(i) + 1];
      REQUIRE(w1 - w0 == l1 - l0);
      for (std::int64_t k = 0; k < w1 - w0; ++k) {
        CHECK(lp.a.col[static_cast<std::size_t>(l0 + k)] ==
              whole.col[static_cast<std::size_t>(w0 + k)]);
        CHECK(lp.a.val[static_cast<std::size_t>(l0 + k)] ==
              whole.val[static_cast<std::size_t>(w0 + k)]);
      }
      CHECK(lp.b[static_cast<std::size_t>(i)] == whole.b[static_cast<std::size_t>(g)]);
    }
  }
  CHECK(nnz_seen == poisson27_nnz(3));
}

TEST_CASE("rhs makes the all-ones vector the exact solution") {
  oracle::SeqMatrix m = oracle::seq_from_problem(make_poisson27(4));
  std::vector<double> ones(static_cast<std::size_t>(m.n), 1.0);
  std::vector<double> ax = oracle::spmv(m, ones);
  for (std::size_t i = 0; i < ax.size(); ++i) CHECK(ax[i] == m.b[i]);
}

TEST_CASE("serialize round trip") {
  Problem p = make_poisson27(3);
  LocalProblem lp = p.block_of(RowRange{5, 14});
  auto bytes = serialize_problem(lp);
  LocalProblem back = deserialize_problem(bytes);
  CHECK(back.a.rows == lp.a.rows);
  CHECK(back.a.global_rows == lp.a.global_rows);
  CHECK(back.a.row_ptr == lp.a.row_ptr);
  CHECK(back.a.col == lp.a.col);
  CHECK(back.a.val == lp.a.val);
  CHECK(back.b == lp.b);
}

TEST_CASE("slice and append agree with direct block extraction") {
  Problem p = make_poisson27(3);
  LocalProblem whole = p.block_of(RowRange{0, 27});
  LocalProblem cut = slice(whole, RowRange{10, 20});
  LocalProblem direct = p.block_of(RowRange{10, 20});
  CHECK(cut.a.rows == direct.a.rows);
  CHECK(cut.a.row_ptr == direct.a.row_ptr);
  CHECK(cut.a.col == direct.a.col);
  CHECK(cut.a.val == direct.a.val);
  CHECK(cut.b == direct.b);

  LocalProblem rebuilt = p.block_of(RowRange{10, 15});
  append_rows(rebuilt, whole, RowRange{15, 20});
  CHECK(rebuilt.a.rows == direct.a.rows);
  CHECK(rebuilt.a.row_ptr == direct.a.row_ptr);
  CHECK(rebuilt.a.col == direct.a.col);
  CHECK(rebuilt.a.val == direct.a.val);
  CHECK(rebuilt.b == direct.b);
}

TEST_CASE("matrix market: general, symmetric, pattern") {
  const std::string dir = "/tmp/ftsim_mtx";
  std::filesystem::create_directories(dir);

  SUBCASE("general real with a duplicate entry accumulated") {
    const std::string path = dir + "/gen.mtx";
    std::ofstream f(path);
    f << "%%MatrixMarket matrix coordinate real general\n"
      << "% comment\n"
      << "3 3 5\n"
      << "1 1 2.0\n"
      << "1 1 0.5\n"
      << "2 2 3.0\n"
      << "3 1 -1.0\n"
      << "3 3 4.0\n";
    f.close();
    Problem p = make_from_matrix_market(path);
    oracle::SeqMatrix m = oracle::seq_from_problem(p);
    CHECK(m.n == 3);
    CHECK(m.row_ptr == std::vector<std::int64_t>{0, 1, 2, 4});
    CHECK(m.col == std::vector<std::int64_t>{0, 1, 0, 2});
    CHECK(m.val == std::vector<double>{2.5, 3.0, -1.0, 4.0});
    CHECK(m.b == std::vector<double>{2.5, 3.0, 3.0});  // row sums
  }
  SUBCASE("symmetric entries are mirrored") {
    const std::string path = dir + "/sym.mtx";
    std::ofstream f(path);
    f << "%%MatrixMarket matrix coordinate real symmetric\n"
      << "3 3 3\n"
      << "1 1 2.0\n"
      << "2 1 -1.0\n"
      << "3 3 1.0\n";
    f.close();
    oracle::SeqMatrix m = oracle::seq_from_problem(make_from_matrix_market(path));
    CHECK(m.row_ptr == std::vector<std::int64_t>{0, 2, 3, 4});
    CHECK(m.col == std::vector<std::int64_t>{0, 1, 0, 2});
    CHECK(m.val == std::vector<double>{2.0, -1.0, -1.0, 1.0});
  }
  SUBCASE("pattern entries read as ones") {
    const std::string path = dir + "/pat.mtx";
    std::ofstream f(path);
    f << "%%MatrixMarket matrix coordinate pattern general\n"
      << "2 2 2\n"
      << "1 1\n"
      << "2 2\n";
    f.close();
    oracle::SeqMatrix m = oracle::seq_from_problem(make_from_matrix_market(path));
    CHECK(m.val == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("rectangular input rejected") {
    const std::string path = dir + "/rect.mtx";
    std::ofstream f(path);
    f << "%%MatrixMarket matrix coordinate real general\n"
      << "2 3 1\n"
      << "1 1 1.0\n";
    f.close();
    CHECK_THROWS_AS(make_from_matrix_market(path), ConfigError);
  }
  SUBCASE("missing file rejected") {
    CHECK_THROWS_AS(make_from_matrix_market(dir + "/nope.mtx"), ConfigError);
  }
}

TEST_CASE("import pattern: off-block columns grouped by owner, sorted") {
  Problem p = make_poisson27(3);  // 27 rows
  auto dist = canonical_distribution(27, 3);
  LocalProblem mid = p.block_of(dist.range_of(1));  // rows [9,18)

  auto imports = compute_imports(mid.a, dist, 1);
  REQUIRE(imports.size() == 2);  // needs rows from both neighbors
  CHECK(imports[0].peer == 0);
  CHECK(imports[1].peer == 2);
  for (const auto& pi : imports) {
    for (std::size_t i = 0; i < pi.indices.size(); ++i) {
      CHECK(dist.owner_of(pi.indices[i]) == pi.peer);
      if (i > 0) CHECK(pi.indices[i] > pi.indices[i - 1]);
    }
  }
}

TEST_CASE("send lists are the exact transpose of recv lists") {
  Problem p = make_poisson27(4);
  auto dist = canonical_distribution(64, 4);
  std::vector<LocalProblem> lps;
  std::vector<const CsrBlock*> blocks;
  for (Rank r = 0; r < 4; ++r) lps.push_back(p.block_of(dist.range_of(r)));
  for (const auto& lp : lps) blocks.push_back(&lp.a);

  auto pats = build_patterns(blocks, dist);
  REQUIRE(pats.size() == 4);
  for (Rank r = 0; r < 4; ++r) {
    for (const auto& recv : pats[static_cast<std::size_t>(r)].recv) {
      bool found = false;
      for (const auto& send : pats[static_cast<std::size_t>(recv.peer)].send) {
        if (send.peer != r) continue;
        found = true;
        CHECK(send.indices == recv.indices);
      }
      CHECK(found);
    }
    // every send is owned by the sender
    for (const auto& send : pats[static_cast<std::size_t>(r)].send)
      for (auto idx : send.indices) CHECK(dist.owner_of(idx) == r);
  }
}
