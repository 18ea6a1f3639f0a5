#include "app.hpp"

int main(int argc, char** argv) { return ncl::cli::run(argc, argv); }
