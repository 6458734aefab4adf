#pragma once

// HTTP front end for a Study.
//   POST /session                  {"mode", "annotator_id"?} -> session token
//   GET  /session/{id}/next        -> item payload or {"done": true}
//   POST /session/{id}/response    {"item", "predicted_label", "confidence"} -> ack
//   GET  /study/results            -> human report JSON
//   GET  /healthz

#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "frame/annotation.hpp"
#include "frame/reports.hpp"

namespace frame {

class AnnotationServer {
 public:
  explicit AnnotationServer(Study& study) : study_(study) {
    // SO_REUSEADDR only: a second server on a bound port must fail.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    routes();
  }
  ~AnnotationServer() { stop(); }

  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Binds without serving; throws if the address is taken. Port 0 picks a
  // free port.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
      if (port_ < 0) throw std::runtime_error("cannot bind " + host);
    } else {
      if (!server_.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
      }
      port_ = port;
    }
    return port_;
  }

  // Serves on the calling thread until stop().
  void serve() { server_.listen_after_bind(); }

  void start_background() {
    thread_ = std::thread([this] { serve(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
    study_.flush();
  }

  int port() const { return port_; }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const StudyError& e) {
      send_json(res, e.status, {{"error", e.what()}});
    } catch (const UsageError& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const DataError& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  }

  void routes() {
    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });
    server_.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
        if (!body.contains("mode") || !body["mode"].is_string()) throw StudyError(400, "missing 'mode'");
        const auto info = study_.open_session(parse_study_mode(body["mode"].get<std::string>()),
                                              body.value("annotator_id", std::string()));
        send_json(res, 201,
                  {{"session", info.session_id},
                   {"annotator_id", info.annotator_id},
                   {"mode", to_string(info.mode)},
                   {"progress", info.position},
                   {"total", info.total}});
      });
    });
    server_.Get(R"(/session/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, study_.next_item(req.matches[1])); });
    });
    server_.Post(R"(/session/([^/]+)/response)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, study_.submit_response(req.matches[1], nlohmann::json::parse(req.body))); });
    });
    server_.Get("/study/results", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, to_json(score_study(study_))); });
    });
  }

  Study& study_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace frame
