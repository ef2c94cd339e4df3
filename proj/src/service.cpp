#include "cgsam/service.hpp"

#include <sodium.h>

#include "cgsam/pipeline.hpp"
#include "httplib.h"

namespace cgsam {

using nlohmann::json;

std::vector<std::uint32_t> rle_encode(const BinaryMask& mask)
{
    std::vector<std::uint32_t> runs;
    std::uint8_t current = 0;
    std::uint32_t length = 0;
    for (std::uint8_t v : mask.values) {
        const std::uint8_t bit = v != 0;
        if (bit != current) {
            runs.push_back(length);
            current = bit;
            length = 0;
        }
        ++length;
    }
    runs.push_back(length);
    return runs;
}

BinaryMask rle_decode(const std::vector<std::uint32_t>& runs, int height, int width)
{
    if (height < 0 || width < 0) throw InputError("rle: negative mask size");
    BinaryMask mask(height, width);
    std::size_t pos = 0;
    std::uint8_t bit = 0;
    for (std::uint32_t run : runs) {
        if (run > mask.values.size() - pos) throw InputError("rle: runs exceed the mask size");
        std::fill_n(mask.values.begin() + static_cast<std::ptrdiff_t>(pos), run, bit);
        pos += run;
        bit ^= 1;
    }
    if (pos != mask.values.size()) throw InputError("rle: runs cover " + std::to_string(pos) + " of " +
                                                    std::to_string(mask.values.size()) + " pixels");
    return mask;
}

namespace {

void init_sodium()
{
    static const bool ok = sodium_init() >= 0;
    if (!ok) throw InternalError("libsodium failed to initialize");
}

json point_json(const Point& p) { return {{"row", p.row}, {"col", p.col}}; }

}  // namespace

std::string base64_encode(std::string_view bytes)
{
    init_sodium();
    constexpr int variant = sodium_base64_VARIANT_ORIGINAL;
    std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
    sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                      variant);
    out.resize(out.size() - 1);  // trailing NUL
    return out;
}

std::string base64_decode(std::string_view text)
{
    init_sodium();
    std::string out(text.size() / 4 * 3 + 3, '\0');
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), nullptr,
                          &len, &end, sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size())
        throw InputError("malformed base64");
    out.resize(len);
    return out;
}

SegmentService::SegmentService(std::shared_ptr<const ClipGuidedSam> model, ServiceOptions options)
    : model_(std::move(model)), options_(std::move(options))
{
    // Text embeddings are computed once per class and reused by every request.
    for (const auto& c : model_->config().classes) model_->class_embedding(c);
}

SegmentRequest SegmentService::parse_request(const std::string& body) const
{
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw RequestError(400, std::string("body is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw RequestError(400, "body must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "image" && it.key() != "class" && it.key() != "points" && it.key() != "mode" &&
            it.key() != "seed")
            throw RequestError(400, "unknown field '" + it.key() + "'");

    SegmentRequest r;
    r.seed = options_.default_seed;
    if (!j.contains("class") || !j["class"].is_string()) throw RequestError(400, "'class' must be a string");
    r.class_name = j["class"].get<std::string>();
    const auto& classes = model_->config().classes;
    if (std::find(classes.begin(), classes.end(), r.class_name) == classes.end())
        throw RequestError(422, "unknown class '" + r.class_name + "'", {{"vocabulary", classes}});

    if (j.contains("mode")) {
        if (!j["mode"].is_string()) throw RequestError(400, "'mode' must be a string");
        try {
            r.mode = parse_prompt_mode(j["mode"].get<std::string>());
        } catch (const InputError& e) {
            throw RequestError(400, e.what());
        }
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw RequestError(400, "'seed' must be a non-negative integer");
        r.seed = j["seed"].get<std::uint64_t>();
    }

    if (!j.contains("image") || !j["image"].is_string()) throw RequestError(400, "'image' must be a base64 PNG string");
    try {
        const std::string bytes = base64_decode(j["image"].get<std::string>());
        r.image = decode_png_rgb(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    } catch (const Error& e) {
        throw RequestError(400, std::string("malformed image: ") + e.what());
    }
    const int side = model_->config().image_encoder.image_size;
    if (r.image.height != side || r.image.width != side)
        throw RequestError(400, "image must be " + std::to_string(side) + "x" + std::to_string(side) + ", got " +
                                    std::to_string(r.image.height) + "x" + std::to_string(r.image.width));

    if (j.contains("points")) {
        const json& pts = j["points"];
        if (!pts.is_array()) throw RequestError(400, "'points' must be an array");
        for (const json& p : pts) {
            if (!p.is_object() || !p.contains("row") || !p.contains("col") || !p["row"].is_number_integer() ||
                !p["col"].is_number_integer() || p.size() != 2)
                throw RequestError(400, "each point must be {\"row\": int, \"col\": int}");
            const Point pt{p["row"].get<int>(), p["col"].get<int>()};
            if (pt.row < 0 || pt.row >= r.image.height || pt.col < 0 || pt.col >= r.image.width)
                throw RequestError(400, "point (" + std::to_string(pt.row) + ", " + std::to_string(pt.col) +
                                            ") lies outside the image");
            r.points.push_back(pt);
        }
    }
    if (r.mode == PromptMode::manual && r.points.empty())
        throw RequestError(400, "manual mode needs at least one point");
    return r;
}

json SegmentService::segment(const SegmentRequest& request) const
{
    PipelineOptions po{request.mode, options_.tau, options_.k, request.seed, true};
    const PipelineInput input{&request.image, request.class_name, nullptr,
                              request.mode == PromptMode::manual ? &request.points : nullptr};
    const PipelineResult res = run_mode_pipeline(*model_, input, po);

    json points = json::array();
    for (const Point& p : res.bundle.points.points) points.push_back(point_json(p));
    const std::vector<std::uint8_t> png = encode_png_gray(res.map.height, res.map.width, res.map.values);
    return {{"model", options_.model_name},
            {"version", kServiceVersion},
            {"class", request.class_name},
            {"mode", to_string(request.mode)},
            {"seed", request.seed},
            {"height", request.image.height},
            {"width", request.image.width},
            {"mask_rle", rle_encode(res.prediction.binarize(0.5))},
            {"similarity_png", base64_encode(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()))},
            {"similarity_mask_rle", rle_encode(res.mask.mask)},
            {"points", points},
            {"points_source", to_string(res.bundle.points.source)}};
}

ServiceResponse SegmentService::handle_segment(const std::string& body) const
{
    try {
        return {200, segment(parse_request(body))};
    } catch (const RequestError& e) {
        json err = e.details;
        err["error"] = e.what();
        return {e.status, err};
    } catch (const InputError& e) {
        return {400, {{"error", e.what()}}};
    } catch (const std::exception& e) {
        return {500, {{"error", e.what()}}};
    }
}

ServiceResponse SegmentService::handle_classes() const
{
    return {200, {{"classes", model_->config().classes}, {"template", model_->config().prompt_template}}};
}

ServiceResponse SegmentService::handle_health() const
{
    return {200, {{"status", "ok"}, {"model", options_.model_name}, {"version", kServiceVersion}}};
}

struct HttpServer::Impl {
    httplib::Server server;
};

HttpServer::HttpServer(const SegmentService& service) : impl_(std::make_unique<Impl>())
{
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    impl_->server.Post("/segment", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.handle_segment(req.body));
    });
    impl_->server.Get("/classes", [&service, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, service.handle_classes());
    });
    impl_->server.Get("/health", [&service, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, service.handle_health());
    });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port)
{
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

void serve(const SegmentService& service, const std::string& host, int port)
{
    HttpServer server(service);
    server.bind(host, port);
    server.run();
}

}  // namespace cgsam
