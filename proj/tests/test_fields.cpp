#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "nlmc/continuum.hpp"
#include "nlmc/field_io.hpp"

using namespace nlmc;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    auto dir = fs::temp_directory_path() / "nlmc_field_tests";
    fs::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("snapshot round trips") {
    auto [fg, cg] = build_grids(20, 4);

    SECTION("constant field is bitwise stable") {
        ScalarField s(fg, 1.0);
        auto path = temp_file("const.txt");
        write_snapshot(s, path.string());
        ScalarField r = read_snapshot(path.string());
        REQUIRE(r.size() == s.size());
        for (int c = 0; c < s.size(); ++c) CHECK(r[c] == s[c]);
    }
    SECTION("random field round trips to 1e-15") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> dist(1e-6, 1e6);
        ScalarField s(fg);
        for (auto& v : s.v) v = dist(rng);
        auto path = temp_file("random.txt");
        write_snapshot(s, path.string());
        ScalarField r = read_snapshot(path.string());
        double max_diff = 0.0;
        for (int c = 0; c < s.size(); ++c)
            max_diff = std::max(max_diff, std::abs(r[c] - s[c]));
        CHECK(max_diff <= 1e-15);
    }
    SECTION("truncated file is rejected") {
        auto path = temp_file("short.txt");
        std::ofstream out(path);
        out << "4 4\n1 2 3\n";
        out.close();
        CHECK_THROWS_AS(read_snapshot(path.string()), ConfigError);
    }
}

TEST_CASE("permeability loading") {
    auto [fg, cg] = build_grids(20, 4);

    SECTION("constant file") {
        ScalarField s(fg, 1.0);
        auto path = temp_file("perm1.txt");
        write_snapshot(s, path.string());
        ScalarField k = load_permeability(path.string(), fg);
        for (int c = 0; c < k.size(); ++c) CHECK(k[c] == 1.0);
    }
    SECTION("channel row survives the round trip") {
        ScalarField s(fg, 1.0);
        for (int i = 0; i < fg.nx; ++i) s[fg.cell(i, 7)] = 1e4;
        auto path = temp_file("perm2.txt");
        write_snapshot(s, path.string());
        ScalarField k = load_permeability(path.string(), fg);
        for (int c = 0; c < k.size(); ++c) CHECK(k[c] == s[c]);
    }
    SECTION("zero entry is rejected with the offending cell") {
        ScalarField s(fg, 1.0);
        s[fg.cell(3, 2)] = 0.0;
        auto path = temp_file("perm3.txt");
        write_snapshot(s, path.string());
        CHECK_THROWS_WITH(load_permeability(path.string(), fg),
                          Catch::Matchers::ContainsSubstring("(3,2)"));
    }
    SECTION("dimension mismatch is rejected") {
        ScalarField s(fg, 1.0);
        auto path = temp_file("perm4.txt");
        write_snapshot(s, path.string());
        auto [fg2, cg2] = build_grids(40, 4);
        CHECK_THROWS_AS(load_permeability(path.string(), fg2), ConfigError);
    }
}

TEST_CASE("channelized generator") {
    auto [fg, cg] = build_grids(60, 12);

    SECTION("zero channels gives the background") {
        ScalarField s = generate_channelized(fg, 1, 0, 2.0, 10.0);
        for (int c = 0; c < s.size(); ++c) CHECK(s[c] == 2.0);
    }
    SECTION("deterministic for a fixed seed") {
        ScalarField a = generate_channelized(fg, 42, 6, 1.0, 1e4);
        ScalarField b = generate_channelized(fg, 42, 6, 1.0, 1e4);
        for (int c = 0; c < a.size(); ++c) CHECK(a[c] == b[c]);
        ScalarField other = generate_channelized(fg, 43, 6, 1.0, 1e4);
        bool differs = false;
        for (int c = 0; c < a.size(); ++c) differs = differs || a[c] != other[c];
        CHECK(differs);
    }
    SECTION("contrast equals channel over background") {
        ScalarField s = generate_channelized(fg, 5, 4, 1.0, 1e4);
        double lo = 1e300, hi = 0.0;
        for (int c = 0; c < s.size(); ++c) {
            lo = std::min(lo, s[c]);
            hi = std::max(hi, s[c]);
        }
        CHECK(hi / lo == Catch::Approx(1e4));
    }
    SECTION("channels span the domain and are connected") {
        ScalarField s = generate_channelized(fg, 9, 3, 1.0, 1e4);
        // every column holds at least one channel cell
        for (int i = 0; i < fg.nx; ++i) {
            bool hit = false;
            for (int j = 0; j < fg.ny; ++j) hit = hit || s[fg.cell(i, j)] == 1e4;
            CHECK(hit);
        }
        // flood fill from the left edge must reach the right edge
        std::vector<char> mark(fg.cell_count(), 0);
        std::vector<int> stack;
        for (int j = 0; j < fg.ny; ++j)
            if (s[fg.cell(0, j)] == 1e4) {
                mark[fg.cell(0, j)] = 1;
                stack.push_back(fg.cell(0, j));
            }
        while (!stack.empty()) {
            int c = stack.back();
            stack.pop_back();
            for (int f : fg.cell_faces(c)) {
                auto [cm, cp] = fg.face_cells(f);
                int nbr = (cm == c) ? cp : cm;
                if (nbr >= 0 && !mark[nbr] && s[nbr] == 1e4) {
                    mark[nbr] = 1;
                    stack.push_back(nbr);
                }
            }
        }
        bool reached = false;
        for (int j = 0; j < fg.ny; ++j) reached = reached || mark[fg.cell(fg.nx - 1, j)];
        CHECK(reached);
    }
}

TEST_CASE("continuum identification") {
    auto [fg, cg] = build_grids(40, 8);

    SECTION("uniform field has only the low continuum") {
        ScalarField s(fg, 1.0);
        ContinuumPartition p = identify_continua(s, fg, cg, {1e3, false});
        CHECK(p.count() == cg.cell_count());
        for (const auto& reg : p.regions) CHECK(reg.continuum == 1);
        for (int C = 0; C < cg.cell_count(); ++C) CHECK(p.index_of(C, 0) == -1);
    }
    SECTION("channel crossing a block splits it with the right volume") {
        ScalarField s(fg, 1.0);
        for (int i = 0; i < fg.nx; ++i) s[fg.cell(i, 11)] = 1e4; // row inside coarse row 2
        ContinuumPartition p = identify_continua(s, fg, cg, {1e3, false});
        for (int I = 0; I < cg.N1; ++I) {
            int C = cg.cell(I, 2);
            int high = p.index_of(C, 0);
            REQUIRE(high >= 0);
            CHECK(p.regions[high].cells.size() == 5u); // one row of a 5x5 block
            CHECK(p.regions[high].volume == Catch::Approx(5.0 * fg.h * fg.h));
            CHECK(p.index_of(C, 1) >= 0);
        }
    }
    SECTION("log-scale threshold follows the per-cell predicate") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> dist(0.0, 3.0);
        ScalarField s(fg);
        for (auto& v : s.v) v = std::pow(10.0, dist(rng));
        ThresholdRule rule{0.8, true};
        ContinuumPartition p = identify_continua(s, fg, cg, rule);
        for (int c = 0; c < fg.cell_count(); ++c)
            CHECK(p.label[c] == (std::log10(s[c]) > 0.8 ? 0 : 1));
    }
    SECTION("regions partition every coarse block") {
        ScalarField s = generate_channelized(fg, 4, 5, 1.0, 1e4);
        ContinuumPartition p = identify_continua(s, fg, cg, {1e3, false});
        for (int C = 0; C < cg.cell_count(); ++C) {
            double vol = 0.0;
            size_t cells = 0;
            for (int r : p.regions_of_coarse[C]) {
                vol += p.regions[r].volume;
                cells += p.regions[r].cells.size();
            }
            CHECK(std::abs(vol - cg.H * cg.H) <= 1e-14);
            CHECK(cells == static_cast<size_t>(cg.ratio * cg.ratio));
        }
        for (const auto& reg : p.regions) CHECK(reg.volume >= fg.h * fg.h - 1e-18);
    }
    SECTION("raising the threshold never promotes a cell") {
        ScalarField s = generate_channelized(fg, 21, 5, 1.0, 1e4);
        ContinuumPartition loose = identify_continua(s, fg, cg, {1e2, false});
        ContinuumPartition strict = identify_continua(s, fg, cg, {1e3, false});
        for (int c = 0; c < fg.cell_count(); ++c)
            if (loose.label[c] == 1) CHECK(strict.label[c] == 1);
    }
}

TEST_CASE("region interfaces and averages") {
    auto [fg, cg] = build_grids(20, 4);
    ScalarField s(fg, 1.0);
    for (int i = 0; i < fg.nx; ++i) s[fg.cell(i, 10)] = 1e4;
    ContinuumPartition p = identify_continua(s, fg, cg, {1e3, false});

    SECTION("interfaces never join a region to itself") {
        InterfaceList list = region_interfaces(fg, p);
        for (const auto& e : list.entries) CHECK(e.region_minus != e.region_plus);
    }
    SECTION("averages of a labeled field recover the labels") {
        ScalarField f(fg);
        for (int c = 0; c < fg.cell_count(); ++c)
            f[c] = static_cast<double>(p.region_of_cell[c]);
        auto avg = average_per_region(f, p);
        for (int r = 0; r < p.count(); ++r) CHECK(avg[r] == Catch::Approx(r));
    }
}
