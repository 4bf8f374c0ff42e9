import os
import shutil

SAMPLE_PROJECTS = ["desk", "full"]
KEPT_FILES = {"experiment.json"}


def cleanup():
    """Remove run output left next to the sample configs (and ./runs)."""
    for project_name in SAMPLE_PROJECTS:
        for f in os.listdir(project_name):
            if f in KEPT_FILES:
                continue
            print(f"Removing {f} from {project_name}")
            path = os.path.join(project_name, f)
            if os.path.isfile(path):
                os.remove(path)
            elif os.path.isdir(path):
                shutil.rmtree(path)
    if os.path.isdir("runs"):
        print("Removing runs")
        shutil.rmtree("runs")


if __name__ == "__main__":
    cleanup()
