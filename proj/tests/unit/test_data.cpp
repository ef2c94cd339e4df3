#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cgsam/data.hpp"
#include "doctest.h"

using namespace cgsam;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("cgsam_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

}  // namespace

TEST_CASE("generation is deterministic to the byte")
{
    GeneratorParams p;
    p.n = 4;
    p.classes = {"circle", "bar"};
    p.seed = 99;
    const auto a = scratch("gen_a"), b = scratch("gen_b");
    generate_synthetic_dataset(p, a);
    generate_synthetic_dataset(p, b);
    const auto ta = tree(a), tb = tree(b);
    CHECK(ta.size() > 4);
    CHECK(ta == tb);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("generated samples respect the generator contract")
{
    GeneratorParams p;
    p.n = 30;
    p.classes = synthetic_classes();
    p.seed = 5;
    for (int i = 0; i < p.n; ++i) {
        const auto s = render_synthetic_sample(p, i);
        CHECK(s.image.height == p.size);
        CHECK(s.image.width == p.size);
        CHECK(s.classes.size() >= 1);
        CHECK(s.classes.size() <= 3);
        CHECK(std::set<std::string>(s.classes.begin(), s.classes.end()).size() == s.classes.size());
        for (const auto& [cls, m] : s.masks) {
            CHECK(m.height == p.size);
            CHECK(m.count() > 0);
            CHECK(m.count() < static_cast<std::size_t>(p.size * p.size));
        }
        for (real v : s.image.pixels.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    p.classes = {"circle", "hexagon"};
    CHECK_THROWS_AS(render_synthetic_sample(p, 0), InputError);
    const auto dir = scratch("gen_bad");
    CHECK_THROWS_AS(generate_synthetic_dataset(p, dir), InputError);
    fs::remove_all(dir);
}

TEST_CASE("camouflage lowers boundary contrast")
{
    GeneratorParams plain;
    plain.seed = 8;
    GeneratorParams camo = plain;
    camo.camouflage = true;
    real a = 0, b = 0;
    for (int i = 0; i < 50; ++i) {
        a += boundary_contrast(render_synthetic_sample(plain, i));
        b += boundary_contrast(render_synthetic_sample(camo, i));
    }
    CHECK(b < a);
}

TEST_CASE("every class is common over 200 samples")
{
    GeneratorParams p;
    p.classes = synthetic_classes();
    p.seed = 3;
    std::map<std::string, int> seen;
    for (int i = 0; i < 200; ++i)
        for (const auto& c : render_synthetic_sample(p, i).classes) ++seen[c];
    for (const auto& c : p.classes) CHECK(seen[c] >= 20);
}

TEST_CASE("split sizes, nesting and validation")
{
    CHECK(split_size(1.0 / 16, 1464) == 92);
    CHECK(split_size(0.001, 10) == 1);
    CHECK(split_size(1.0, 7) == 7);
    CHECK(split_size(0.5, 5) == 3);

    GeneratorParams p;
    p.n = 40;
    p.seed = 1;
    const auto dir = scratch("split");
    const auto m = generate_synthetic_dataset(p, dir);
    const auto all = make_split(m, 1.0, 4);
    CHECK(all.ids.size() == 40);
    const auto eighth = make_split(m, 1.0 / 8, 4), sixteenth = make_split(m, 1.0 / 16, 4);
    CHECK(eighth.ids.size() == 5);
    CHECK(sixteenth.ids.size() == 3);
    const std::set<std::string> big(eighth.ids.begin(), eighth.ids.end());
    for (const auto& id : sixteenth.ids) CHECK(big.count(id) == 1);

    const auto rest = complement_split(m, eighth);
    CHECK(rest.ids.size() == 35);
    for (const auto& id : rest.ids) CHECK(big.count(id) == 0);

    CHECK_THROWS_AS(make_split(m, 1.5, 0), InputError);
    CHECK_THROWS_AS(make_split(m, 0.0, 0), InputError);

    save_split(dir / "s.json", eighth);
    const auto back = load_split(dir / "s.json");
    CHECK(back.ids == eighth.ids);
    CHECK(back.fraction == eighth.fraction);
    CHECK(back.seed == eighth.seed);
    fs::remove_all(dir);
}

TEST_CASE("load round trip preserves masks exactly")
{
    GeneratorParams p;
    p.n = 6;
    p.seed = 12;
    const auto dir = scratch("load");
    generate_synthetic_dataset(p, dir);
    const auto m = load_manifest(dir / "manifest.json");
    CHECK(m.samples.size() == 6);
    CHECK(load_manifest(dir).samples.size() == 6);
    for (int i = 0; i < p.n; ++i) {
        const auto rendered = render_synthetic_sample(p, i);
        const auto loaded = load_sample(m, m.samples[i].id);
        CHECK(loaded.classes == rendered.classes);
        CHECK(loaded.image.height == p.size);
        for (const auto& [cls, mask] : rendered.masks) {
            CHECK(loaded.masks.at(cls).count() == mask.count());
            CHECK(loaded.masks.at(cls) == mask);
        }
        for (std::size_t k = 0; k < rendered.image.pixels.size(); ++k)
            CHECK(loaded.image.pixels.data[k] == to_byte(rendered.image.pixels.data[k]) / 255.0);
    }
    CHECK_THROWS(load_sample(m, "nope"));
    fs::remove(dir / m.samples[0].image);
    CHECK_THROWS_AS(load_sample(m, m.samples[0].id), IoError);
    fs::remove_all(dir);
}
