// http_api.hpp
//
// HTTP front end for SessionService.
//
//   POST /v1/sessions                 {image_png_b64, query, level?, config?}
//   POST /v1/sessions/{id}/step
//   POST /v1/sessions/{id}/feedback   {kind, box? | text? | region?+mask_irle?}
//   GET  /v1/sessions/{id}
//   POST /v1/sessions/{id}/finalize
//   GET  /v1/sessions/{id}/mask/{t|final}   IRLE v1 body
//   GET  /healthz
//
// Errors are {error, field?, session_id?} with 400, 404, 409 or 503.

#pragma once

#include <memory>
#include <string>

#include "irsis/service.hpp"

namespace irsis {

class ApiServer {
public:
    explicit ApiServer(SessionService& service);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    int bind(const std::string& host, int port);
    void serve();
    int start_background(const std::string& host, int port = 0);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace irsis
