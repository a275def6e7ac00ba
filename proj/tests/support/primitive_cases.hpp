#pragma once

#include "helpers.hpp"
