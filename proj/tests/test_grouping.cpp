#include "rgrad/errors.hpp"
#include "rgrad/grouping.hpp"
#include "rgrad/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace rgrad;

namespace {

std::vector<CameraSpec> cams_at(const std::vector<double>& rs)
{
    std::vector<CameraSpec> out;
    int id = 0;
    for (double r : rs) {
        CameraSpec c;
        c.r = r;
        c.id = id++;
        out.push_back(c);
    }
    return out;
}

std::vector<int> ids_of(const std::vector<CameraSpec>& cams, std::initializer_list<int> which)
{
    std::vector<int> out;
    for (int i : which)
        out.push_back(cams[static_cast<std::size_t>(i)].id);
    return out;
}

void check_true_partition(const RegimePartition& p, const std::vector<CameraSpec>& cams)
{
    std::set<int> all, seen;
    for (const auto& c : cams)
        all.insert(c.id);
    for (int id : p.near_ids)
        CHECK(seen.insert(id).second);
    for (int id : p.far_ids)
        CHECK(seen.insert(id).second);
    CHECK(seen == all);
    for (const auto& c : cams) {
        if (p.is_near(c.id))
            CHECK(c.r <= p.r_med);
        else
            CHECK(c.r > p.r_med);
    }
}

} // namespace

TEST_SUITE("grouping")
{
    TEST_CASE("median split uses the lower median")
    {
        const auto cams = cams_at({1, 2, 3, 4});
        const RegimePartition p = median_split(cams);
        CHECK(p.r_med == 2.0);
        CHECK(p.near_ids == ids_of(cams, {0, 1}));
        CHECK(p.far_ids == ids_of(cams, {2, 3}));
        CHECK(p.mean_distance == 2.5);
        check_true_partition(p, cams);
    }

    TEST_CASE("median split absorbs ties into near")
    {
        const auto cams = cams_at({5, 5, 5, 9});
        const RegimePartition p = median_split(cams);
        CHECK(p.near_ids.size() == 3);
        CHECK(p.far_ids == ids_of(cams, {3}));

        const auto tail = cams_at({9, 5, 9, 9});
        const RegimePartition q = median_split(tail);
        CHECK(q.near_ids == ids_of(tail, {1}));
        CHECK(q.far_ids.size() == 3);
        check_true_partition(q, tail);
    }

    TEST_CASE("median split errors")
    {
        CHECK_THROWS_AS(median_split(cams_at({2, 2, 2, 2})), DegeneratePartitionError);
        CHECK_THROWS_AS(median_split(cams_at({3})), std::invalid_argument);
        CHECK_THROWS_AS(median_split(std::vector<CameraSpec>{}), std::invalid_argument);
        CHECK_THROWS_AS(kmeans2_split(cams_at({1, 1, 1})), DegeneratePartitionError);
        CHECK_THROWS_AS(percentile_split(cams_at({1, 2, 3}), 0.0), std::invalid_argument);
        CHECK_THROWS_AS(percentile_split(cams_at({1, 2, 3}), 100.0), std::invalid_argument);
        CHECK_THROWS_AS(split_by(cams_at({1, 2, 3}), "thirds"), std::invalid_argument);
    }

    TEST_CASE("percentile split uses nearest rank")
    {
        std::vector<double> ten;
        for (int i = 1; i <= 10; ++i)
            ten.push_back(i);
        const auto cams = cams_at(ten);
        CHECK(percentile_split(cams, 30.0).near_ids.size() == 3);
        CHECK(percentile_split(cams, 70.0).near_ids.size() == 7);
        CHECK(percentile_split(cams, 30.0).method == PartitionMethod::Percentile);
        CHECK(split_by(cams, "percentile:70").near_ids.size() == 7);
    }

    TEST_CASE("percentile 50 matches the median split")
    {
        CounterRng rng(21);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 2 + rng.below(12);
            std::vector<double> rs;
            for (std::size_t i = 0; i < n; ++i)
                rs.push_back(static_cast<double>(1 + rng.below(5))); // frequent ties
            const auto cams = cams_at(rs);
            bool median_ok = true;
            RegimePartition a, b;
            try {
                a = median_split(cams);
            } catch (const DegeneratePartitionError&) {
                median_ok = false;
            }
            if (!median_ok) {
                CHECK_THROWS_AS(percentile_split(cams, 50.0), DegeneratePartitionError);
                continue;
            }
            b = percentile_split(cams, 50.0);
            CHECK(a.near_ids == b.near_ids);
            CHECK(a.far_ids == b.far_ids);
            CHECK(a.r_med == b.r_med);
            check_true_partition(a, cams);
        }
    }

    TEST_CASE("median split is invariant under permutation")
    {
        CounterRng rng(22);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> rs;
            for (int i = 0; i < 9; ++i)
                rs.push_back(rng.uniform(1.0, 8.0));
            auto cams = cams_at(rs);
            const RegimePartition ref = median_split(cams);
            std::shuffle(cams.begin(), cams.end(), rng);
            const RegimePartition p = median_split(cams);
            std::set<int> n1(ref.near_ids.begin(), ref.near_ids.end()), n2(p.near_ids.begin(), p.near_ids.end());
            CHECK(n1 == n2);
            CHECK(p.r_med == ref.r_med);
        }
    }

    TEST_CASE("two-means split")
    {
        const auto a = cams_at({1, 1.1, 9, 9.2});
        const RegimePartition p = kmeans2_split(a, 5);
        CHECK(p.near_ids == ids_of(a, {0, 1}));
        CHECK(p.far_ids == ids_of(a, {2, 3}));
        const auto b = cams_at({1, 2, 3, 4});
        const RegimePartition q = kmeans2_split(b);
        CHECK(q.near_ids == ids_of(b, {0, 1}));
        CHECK(q.far_ids == ids_of(b, {2, 3}));
        CHECK(q.method == PartitionMethod::KMeans2);
        check_true_partition(split_by(b, "kmeans"), b);
    }

    TEST_CASE("bimodality coefficient")
    {
        const std::vector<double> masses = {2, 2, 2, 7, 7, 7};
        const DistanceStats s = distance_stats(masses);
        CHECK(std::abs(s.skewness) < 1e-12);
        CHECK(s.kurtosis == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.bimodality == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.mean == 4.5);
        CHECK(s.variance == doctest::Approx(6.25));

        CounterRng rng(23);
        std::vector<double> uni(10000);
        for (double& v : uni)
            v = rng.uniform01();
        CHECK(distance_stats(uni).bimodality == doctest::Approx(1.0 / 1.8).epsilon(0.02 * 1.8));

        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> xs(4 + rng.below(20));
            for (double& v : xs)
                v = rng.uniform(0.5, 9.0);
            const DistanceStats d = distance_stats(xs);
            CHECK(d.variance >= 0.0);
            CHECK(d.bimodality > 0.0);
            CHECK(d.bimodality <= 1.0 + 1e-12);
        }

        CHECK_THROWS_AS(distance_stats(std::vector<double>{3, 3, 3, 3}), UndefinedMomentsError);
        CHECK_THROWS_AS(distance_stats(std::vector<double>{1, 2, 3}), std::invalid_argument);
    }
}
