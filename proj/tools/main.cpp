#include "tofr/app.hpp"

int main(int argc, char** argv) { return tofr::run_cli(argc, argv); }
