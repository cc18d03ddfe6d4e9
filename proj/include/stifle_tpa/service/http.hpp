#pragma once

// HTTP/JSON routes for case review.
//
//   POST /cases                      create from detections or landmarks
//   GET  /cases?offset=&limit=       paged summaries
//   GET  /cases/{id}                 full case
//   PUT  /cases/{id}/landmarks       expert correction, recomputes TPA
//   GET  /cases/{id}/events          correction log
//   PUT  /cases/{id}/image           raw image bytes (Content-Type kept)
//   GET  /cases/{id}/image
//   GET  /export/corrections         corrected cases as label files
//   GET  /health

#include <exception>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "stifle_tpa/ingest.hpp"
#include "stifle_tpa/service/codec.hpp"
#include "stifle_tpa/service/store.hpp"

namespace stifle_tpa::service {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(400, "BadRequest", std::string("body is not valid JSON: ") + e.what());
  }
}

inline std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    const long long v = std::stoll(req.get_param_value(key));
    if (v < 0) throw ServiceError(400, "BadRequest", std::string(key) + " must be >= 0");
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw ServiceError(400, "BadRequest", std::string(key) + " must be an integer");
  }
}

inline json case_response(const Case& c) {
  json j = {{"case_id", c.case_id},
            {"version", c.version},
            {"status", std::string(to_string(c.status))},
            {"tpa", c.tpa ? tpa_json(*c.tpa) : json(nullptr)}};
  if (c.error) j["error"] = {{"kind", std::string(to_string(*c.error))}, {"message", c.error_message}};
  return j;
}

/// Maps every failure to a JSON error body with the right status code.
template <typename Handler>
auto guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const ServiceError& e) {
      send_json(res, e.status(), e.to_json());
    } catch (const MissingRoleError& e) {
      json roles = json::array();
      for (auto r : e.roles()) roles.push_back(std::string(to_string(r)));
      send_json(res, 422, {{"error", "MissingRole"}, {"message", e.what()}, {"roles", roles}});
    } catch (const Error& e) {
      const int status = e.kind() == ErrorKind::IoError ? 500 : 400;
      send_json(res, status, {{"error", std::string(to_string(e.kind()))}, {"message", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", "BadRequest"}, {"message", e.what()}});
    }
  };
}

}  // namespace detail

inline void mount(httplib::Server& server, CaseStore& store) {
  using detail::guarded;
  using detail::send_json;

  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});

  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    send_json(res, 500, {{"error", "Internal"}, {"message", msg}});
  });

  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  server.Post("/cases", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const json body = detail::parse_body(req);
    if (!body.is_object() || !body.contains("image_meta")) {
      throw ServiceError(400, "BadRequest", "body needs image_meta and detections or landmarks");
    }
    const ImageMeta meta = image_meta_from_json(body["image_meta"]);
    Case c;
    if (body.contains("detections")) {
      c = store.create_from_detections(meta, detections_from_json(body["detections"]));
    } else if (body.contains("landmarks")) {
      c = store.create(meta, landmarks_from_json(body["landmarks"]));
    } else {
      throw ServiceError(400, "BadRequest", "body needs detections or landmarks");
    }
    send_json(res, 201, detail::case_response(c));
  }));

  server.Get("/cases", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto offset = detail::query_size(req, "offset", 0);
    const auto limit = detail::query_size(req, "limit", 50);
    json items = json::array();
    for (const auto& c : store.list(offset, limit)) items.push_back(c.summary_json());
    send_json(res, 200, {{"cases", items}, {"total", store.count()}, {"offset", offset}, {"limit", limit}});
  }));

  server.Get("/cases/:id", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    auto c = store.get(id);
    if (!c) throw ServiceError(404, "NotFound", "no case " + id);
    send_json(res, 200, c->to_json());
  }));

  server.Put("/cases/:id/landmarks", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const json body = detail::parse_body(req);
    if (!body.is_object()) throw ServiceError(400, "BadRequest", "body must be a JSON object");
    UpdateRequest update;
    json points;
    if (body.contains("landmarks")) {
      points = body["landmarks"];
    } else {
      points = body;
      points.erase("expected_version");
      points.erase("actor");
    }
    if (body.contains("expected_version")) update.expected_version = body["expected_version"].get<std::uint64_t>();
    if (body.contains("actor")) update.actor = body["actor"].get<std::string>();
    update.changes = role_points_from_json(points);
    const Case c = store.update_landmarks(req.path_params.at("id"), update);
    send_json(res, 200, detail::case_response(c));
  }));

  server.Get("/cases/:id/events", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    json arr = json::array();
    for (const auto& e : store.events(req.path_params.at("id"))) arr.push_back(e.to_json());
    send_json(res, 200, arr);
  }));

  server.Put("/cases/:id/image", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    if (req.body.empty()) throw ServiceError(400, "BadRequest", "empty image body");
    store.put_image(req.path_params.at("id"), req.body, req.get_header_value("Content-Type"));
    send_json(res, 200, {{"case_id", req.path_params.at("id")}, {"bytes", req.body.size()}});
  }));

  server.Get("/cases/:id/image", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    auto img = store.image(req.path_params.at("id"));
    if (!img) throw ServiceError(404, "NotFound", "case has no image");
    res.status = 200;
    res.set_content(img->first, img->second);
  }));

  server.Get("/export/corrections", guarded([&store](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, store.export_corrections());
  }));
}

}  // namespace stifle_tpa::service
