from fusion_lab.harness.experiment import cmd_analyze, cmd_pdc, cmd_prepare, cmd_run, run_cell
from fusion_lab.harness.planning import CellStatus, ExperimentPlanner, GridCell, grid_rows
from fusion_lab.harness.reports import aggregate, cmd_report, collect_reports, format_table, sweep_frame
