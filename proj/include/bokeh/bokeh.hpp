#pragma once

#include "bokeh/conditioning.hpp"
#include "bokeh/csv.hpp"
#include "bokeh/error.hpp"
#include "bokeh/harness/dataset.hpp"
#include "bokeh/harness/ranking.hpp"
#include "bokeh/harness/submission.hpp"
#include "bokeh/inference.hpp"
#include "bokeh/io.hpp"
#include "bokeh/metrics.hpp"
#include "bokeh/optics.hpp"
#include "bokeh/parallel.hpp"
#include "bokeh/raster.hpp"
#include "bokeh/renderer.hpp"
