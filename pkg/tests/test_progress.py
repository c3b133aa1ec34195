from app.services.progress import ProgressTracker, progress_store


def test_tracker_records_percent():
    tracker = ProgressTracker("ladder")
    tracker(1, 4, "grid 256")
    assert progress_store["ladder"]["percent"] == 25
    assert progress_store["ladder"]["status"] == "processing"


def test_tracker_complete_and_fail():
    tracker = ProgressTracker("study")
    tracker.complete({"rows": 3})
    assert progress_store["study"]["result"] == {"rows": 3}
    tracker.fail("grid too coarse")
    assert progress_store["study"]["status"] == "error"


def test_empty_total_reports_zero():
    ProgressTracker("empty").update_progress(0, 0, "nothing to do")
    assert progress_store["empty"]["percent"] == 0
