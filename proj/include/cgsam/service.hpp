#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cgsam/image.hpp"
#include "cgsam/model.hpp"
#include "cgsam/seg_head.hpp"
#include "json.hpp"

namespace cgsam {

inline constexpr const char* kServiceVersion = "1.0.0";

/// Row-major run lengths alternating background/foreground, starting with a
/// (possibly zero) background run. The runs sum to height * width.
std::vector<std::uint32_t> rle_encode(const BinaryMask& mask);
/// Throws InputError when the runs do not sum to height * width.
BinaryMask rle_decode(const std::vector<std::uint32_t>& runs, int height, int width);

std::string base64_encode(std::string_view bytes);
/// Standard alphabet with padding. Throws InputError on malformed input.
std::string base64_decode(std::string_view text);

struct SegmentRequest {
    Image image;
    std::string class_name;
    std::vector<Point> points;  // used in manual mode only
    PromptMode mode = PromptMode::semi_automatic;
    std::uint64_t seed = 0;
};

/// An HTTP-style status plus JSON body. Errors carry {"error": message, ...}.
struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

class RequestError : public Error {
public:
    RequestError(int status, const std::string& message, nlohmann::json details = nlohmann::json::object())
        : Error(message), status(status), details(std::move(details))
    {
    }
    int status;
    nlohmann::json details;
};

struct ServiceOptions {
    std::string model_name = "cgsam";
    real tau = kDefaultTau;
    int k = kDefaultPoints;
    std::uint64_t default_seed = 0;  // for requests without a seed field
};

/// Stateless request handling over a read-only model. Safe to call from
/// several threads at once.
class SegmentService {
public:
    SegmentService(std::shared_ptr<const ClipGuidedSam> model, ServiceOptions options);

    /// Parses and validates a /segment body. Throws RequestError (400 or 422).
    SegmentRequest parse_request(const std::string& body) const;
    nlohmann::json segment(const SegmentRequest& request) const;

    ServiceResponse handle_segment(const std::string& body) const;
    ServiceResponse handle_classes() const;
    ServiceResponse handle_health() const;

    const ClipGuidedSam& model() const { return *model_; }

private:
    std::shared_ptr<const ClipGuidedSam> model_;
    ServiceOptions options_;
};

/// POST /segment, GET /classes and GET /health over HTTP.
class HttpServer {
public:
    explicit HttpServer(const SegmentService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Binds and blocks.
void serve(const SegmentService& service, const std::string& host, int port);

}  // namespace cgsam
