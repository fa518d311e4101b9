#pragma once

#include "rupi/calibration_errors.hpp"
#include "rupi/conformal.hpp"
#include "rupi/copula_pi.hpp"
#include "rupi/dataio.hpp"
#include "rupi/error.hpp"
#include "rupi/evalmetrics.hpp"
#include "rupi/kdtree.hpp"
#include "rupi/knn_pi.hpp"
#include "rupi/neural.hpp"
#include "rupi/pipeline.hpp"
#include "rupi/rng.hpp"
#include "rupi/serialize.hpp"
#include "rupi/statcore.hpp"
#include "rupi/textio.hpp"
