/*
 * Copyright (C) 2026 The imujaw authors
 *
 * SPDX-License-Identifier: Apache-2.0
 * See the file LICENSE for more information.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace imujaw {

/// Base class of every exception thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace imujaw
