#pragma once

#include "cmlab/asep.hpp"
#include "cmlab/cmbounds.hpp"
#include "cmlab/errors.hpp"
#include "cmlab/harness.hpp"
#include "cmlab/kacwalk.hpp"
#include "cmlab/matcore.hpp"
#include "cmlab/random.hpp"
#include "cmlab/thermo.hpp"
