#include <random>
#include <thread>

#include "cgsam/data.hpp"
#include "cgsam/service.hpp"
#include "doctest.h"
#include "httplib.h"
#include "oracles.hpp"

using namespace cgsam;
using nlohmann::json;

namespace {

std::shared_ptr<const ClipGuidedSam> toy_model()
{
    static const auto model = std::make_shared<const ClipGuidedSam>(ModelConfig::toy());
    return model;
}

const SegmentService& service()
{
    static const SegmentService s(toy_model(), {});
    return s;
}

std::string png_base64(const Image& im)
{
    const auto png = encode_png_rgb(im);
    return base64_encode(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
}

std::string image_b64(int index)
{
    GeneratorParams p;
    p.seed = 77;
    return png_base64(render_synthetic_sample(p, index).image);
}

json request(const std::string& cls, const std::string& mode, json points = json::array(), int index = 0)
{
    json j{{"image", image_b64(index)}, {"class", cls}, {"mode", mode}};
    if (!points.empty()) j["points"] = points;
    return j;
}

BinaryMask decode_mask(const json& body, const char* key)
{
    return rle_decode(body[key].get<std::vector<std::uint32_t>>(), body["height"], body["width"]);
}

}  // namespace

TEST_CASE("RLE round trips random masks")
{
    std::mt19937_64 gen(1);
    for (int i = 0; i < 100; ++i) {
        const int h = 1 + static_cast<int>(gen() % 20), w = 1 + static_cast<int>(gen() % 20);
        const auto m = oracle::random_mask(h, w, gen, (i % 10) / 9.0);
        const auto runs = rle_encode(m);
        std::uint64_t total = 0;
        for (auto r : runs) total += r;
        CHECK(total == static_cast<std::uint64_t>(h * w));
        CHECK(rle_decode(runs, h, w) == m);
    }
    CHECK(rle_encode(BinaryMask(2, 3)) == std::vector<std::uint32_t>{6});
    CHECK(rle_encode(BinaryMask(2, 2, 1)) == std::vector<std::uint32_t>{0, 4});
    CHECK(rle_decode({6}, 2, 3).count() == 0);
    CHECK_THROWS_AS(rle_decode({3, 2}, 2, 3), InputError);
    CHECK_THROWS_AS(rle_decode({5, 5}, 2, 3), InputError);
}

TEST_CASE("base64 round trip and rejection")
{
    std::mt19937_64 gen(2);
    for (int n = 0; n < 40; ++n) {
        std::string s(n, '\0');
        for (auto& c : s) c = static_cast<char>(gen() & 0xff);
        CHECK(base64_decode(base64_encode(s)) == s);
    }
    CHECK(base64_encode("foob") == "Zm9vYg==");
    CHECK_THROWS_AS(base64_decode("Zm9v!!"), InputError);
}

TEST_CASE("manual requests echo the user points")
{
    const json pts = json::array({{{"row", 10}, {"col", 20}}, {{"row", 50}, {"col", 60}}});
    const auto r = service().handle_segment(request("circle", "manual", pts).dump());
    REQUIRE(r.status == 200);
    CHECK(r.body["points"] == pts);
    CHECK(r.body["points_source"] == "user");
    CHECK(r.body["height"] == 96);
    CHECK(r.body["width"] == 96);
    CHECK(decode_mask(r.body, "mask_rle").height == 96);
    CHECK(r.body["version"] == kServiceVersion);
    const std::string png = base64_decode(r.body["similarity_png"].get<std::string>());
    CHECK(png.substr(1, 3) == "PNG");
}

TEST_CASE("semi-automatic requests sample points on the similarity mask")
{
    const json ignored = json::array({{{"row", 1}, {"col", 1}}});
    const auto r = service().handle_segment(request("square", "semi_automatic", ignored).dump());
    REQUIRE(r.status == 200);
    CHECK(r.body["points"].size() == kDefaultPoints);
    const auto b = decode_mask(r.body, "similarity_mask_rle");
    if (r.body["points_source"] == "similarity_mask")
        for (const auto& p : r.body["points"]) CHECK(b.at(p["row"], p["col"]) == 1);
}

TEST_CASE("responses are deterministic and stateless")
{
    const std::string a = request("circle", "semi_automatic").dump();
    json bj = request("cross", "manual", json::array({{{"row", 30}, {"col", 30}}}), 1);
    bj["seed"] = 5;
    const std::string b = bj.dump();
    const auto a1 = service().handle_segment(a).body.dump();
    const auto b1 = service().handle_segment(b).body.dump();
    const auto a2 = service().handle_segment(a).body.dump();
    CHECK(a1 == a2);
    CHECK(a1 != b1);

    SegmentService fresh(toy_model(), {});
    CHECK(fresh.handle_segment(a).body.dump() == a1);

    json seeded = json::parse(a);
    seeded["seed"] = 9;
    CHECK(service().handle_segment(seeded.dump()).body["seed"] == 9);
}

TEST_CASE("bad requests get 400 or 422")
{
    auto status = [](const json& j) { return service().handle_segment(j.dump()).status; };

    const auto unknown = service().handle_segment(request("hexagon", "semi_automatic").dump());
    CHECK(unknown.status == 422);
    CHECK(unknown.body["vocabulary"] == json(toy_model()->config().classes));
    CHECK(unknown.body.contains("error"));

    json j = request("circle", "semi_automatic");
    j["image"] = "not base64!";
    CHECK(status(j) == 400);
    j["image"] = base64_encode("plain text, not a PNG");
    CHECK(status(j) == 400);
    j["image"] = png_base64(Image(32, 32));
    CHECK(status(j) == 400);

    j = request("circle", "semi_automatic");
    j["extra"] = 1;
    CHECK(status(j) == 400);
    CHECK(status(request("circle", "manual")) == 400);
    CHECK(status(request("circle", "automatic")) == 400);
    CHECK(status(request("circle", "manual", json::array({{{"row", 96}, {"col", 0}}}))) == 400);
    CHECK(status(request("circle", "manual", json::array({{{"row", 1}}}))) == 400);
    j = request("circle", "semi_automatic");
    j["seed"] = -1;
    CHECK(status(j) == 400);
    CHECK(service().handle_segment("{").status == 400);
    CHECK(service().handle_segment("[]").status == 400);
}

TEST_CASE("classes and health")
{
    const auto c = service().handle_classes();
    CHECK(c.status == 200);
    CHECK(c.body["classes"] == json(toy_model()->config().classes));
    CHECK(c.body["template"] == toy_model()->config().prompt_template);
    CHECK(service().handle_classes().body == c.body);

    const auto h = service().handle_health();
    CHECK(h.body["status"] == "ok");
    CHECK(h.body["version"] == kServiceVersion);
}

TEST_CASE("HTTP endpoints")
{
    HttpServer server(service());
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread t([&] { server.run(); });

    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(60, 0);
    for (int tries = 0; tries < 100 && !cli.Get("/health"); ++tries)
        std::this_thread::sleep_for(std::chrono::milliseconds(20));

    auto health = cli.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(json::parse(health->body)["status"] == "ok");

    auto classes = cli.Get("/classes");
    REQUIRE(classes);
    CHECK(json::parse(classes->body)["classes"].size() == toy_model()->config().classes.size());

    const json pts = json::array({{{"row", 12}, {"col", 34}}, {{"row", 56}, {"col", 78}}});
    const std::string body = request("triangle", "manual", pts).dump();
    auto seg = cli.Post("/segment", body, "application/json");
    REQUIRE(seg);
    CHECK(seg->status == 200);
    CHECK(seg->body == service().handle_segment(body).body.dump());
    CHECK(json::parse(seg->body)["points"] == pts);

    auto bad = cli.Post("/segment", request("hexagon", "semi_automatic").dump(), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 422);

    server.stop();
    t.join();
}
