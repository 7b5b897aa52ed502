#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "segbench/rng.hpp"

using segbench::RngStream;

TEST_CASE("same seed and path reproduce the same draws") {
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c1 = RngStream(7).split(3).split(9);
    RngStream c2 = RngStream(7).split(3).split(9);
    for (int i = 0; i < 10; ++i) CHECK(c1.next_double() == c2.next_double());
}

TEST_CASE("split is independent of parent draw position") {
    RngStream a(11), b(11);
    for (int i = 0; i < 5; ++i) a.next_u64(); // advance a only
    RngStream ca = a.split(2), cb = b.split(2);
    for (int i = 0; i < 10; ++i) CHECK(ca.next_u64() == cb.next_u64());
}

TEST_CASE("sibling streams differ") {
    RngStream root(3);
    RngStream a = root.split(0), b = root.split(1);
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);
}

TEST_CASE("doubles lie in [0,1) and look uniform") {
    RngStream r(123);
    double sum = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = r.next_double();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
        sum += x;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("shuffle is a permutation") {
    RngStream r(9);
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    auto w = v;
    r.shuffle(w);
    std::sort(w.begin(), w.end());
    CHECK(w == v);
}
