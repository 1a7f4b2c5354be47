"""Writes the match_*.csv fixtures: a short two-period game in the layout of
the Metrica public sample data (normalized coordinates, 14 roster columns per
team, substitutes NaN until they come on).

Pass rows and what the pipeline should do with them:
  A home f100  emitted
  B away f150  emitted
  C home f30   insufficient history (t < 2 s)
  D away f250  gap (Player19 missing f215-f230, 16 frames)
  E home f200  emitted (Player3 missing f170-f174, interpolated)
  F home f120  missing end location
  G home f400  emitted, period 2 (home attacks toward -x, mirrored)
  H away f310  insufficient history (window crosses the period break)
  I home f290  emitted (Player12 replaces Player5 at f260)
"""

import math

FRAMES_P1 = range(1, 301)
FRAMES_P2 = range(301, 501)
ROSTER = 14


def team_xy(team, k, f, period):
    base_x = 0.12 + 0.025 * k if team == "Home" else 0.58 + 0.025 * k
    x = base_x + 0.02 * math.sin(f / 40.0 + k)
    y = 0.06 + 0.085 * k + 0.015 * math.cos(f / 33.0 + 2 * k)
    if period == 2:
        x = 1.0 - x
    return x, y


def missing(team, k, f):
    if team == "Home":
        if k == 2 and 170 <= f <= 174:  # Player3
            return True
        if k == 4 and f >= 260:  # Player5 substituted
            return True
        if k == 11 and f < 260:  # Player12 on the bench
            return True
        if k >= 12:
            return True
    else:
        if k == 4 and 215 <= f <= 230:  # Player19
            return True
        if k >= 11:
            return True
    return False


def write_team(team, first_jersey, path):
    names = [f"Player{first_jersey + k}" for k in range(ROSTER)]
    with open(path, "w") as out:
        out.write(",,," + "".join(f"{team},," for _ in names) + ",\n")
        out.write(",,," + "".join(f"{first_jersey + k},," for k in range(ROSTER)) + ",\n")
        out.write("Period,Frame,Time [s]," + "".join(f"{n},," for n in names) + "Ball,\n")
        for period, frames in ((1, FRAMES_P1), (2, FRAMES_P2)):
            for f in frames:
                cells = [str(period), str(f), f"{f / 25:.2f}"]
                for k in range(ROSTER):
                    if missing(team, k, f):
                        cells += ["NaN", "NaN"]
                    else:
                        x, y = team_xy(team, k, f, period)
                        cells += [f"{x:.5f}", f"{y:.5f}"]
                bx, by = team_xy("Home", 0, f, period)
                cells += [f"{bx + 0.004:.5f}", f"{by + 0.003:.5f}"]
                out.write(",".join(cells) + "\n")


def write_events(path):
    rows = [
        ("Away", "SET PIECE", "KICK OFF", 1, 1, None, None, None, None),
        ("Home", "PASS", "", 1, 30, 0.20, 0.30, 0.35, 0.40),
        ("Home", "PASS", "", 1, 100, 0.22, 0.31, 0.47, 0.52),
        ("Home", "PASS", "", 1, 120, 0.30, 0.40, None, None),
        ("Away", "PASS", "", 1, 150, 0.70, 0.60, 0.55, 0.20),
        ("Away", "BALL LOST", "INTERCEPTION", 1, 160, 0.51, 0.24, 0.73, 0.48),
        ("Home", "PASS", "", 1, 200, 0.25, 0.10, 0.90, 0.95),
        ("Away", "PASS", "", 1, 250, 0.66, 0.50, 0.40, 0.45),
        ("Home", "RECOVERY", "INTERCEPTION", 1, 270, 0.47, 0.19, None, None),
        ("Home", "PASS", "", 1, 290, 0.33, 0.44, 0.05, 0.50),
        ("Away", "PASS", "", 2, 310, 0.40, 0.50, 0.30, 0.60),
        ("Away", "SHOT", "ON TARGET", 2, 350, 0.12, 0.50, 0.01, 0.52),
        ("Home", "PASS", "", 2, 400, 0.80, 0.30, 0.10, 0.20),
    ]
    with open(path, "w") as out:
        out.write("Team,Type,Subtype,Period,Start Frame,Start Time [s],End Frame,End Time [s],"
                  "From,To,Start X,Start Y,End X,End Y\n")
        for team, kind, sub, period, f, sx, sy, ex, ey in rows:
            fmt = lambda v: "NaN" if v is None else f"{v:.2f}"
            end_frame = f + 20
            out.write(f"{team},{kind},{sub},{period},{f},{f / 25:.2f},{end_frame},{end_frame / 25:.2f},"
                      f"Player{1 if team == 'Home' else 15},,{fmt(sx)},{fmt(sy)},{fmt(ex)},{fmt(ey)}\n")


if __name__ == "__main__":
    write_team("Home", 1, "match_home.csv")
    write_team("Away", 15, "match_away.csv")
    write_events("match_events.csv")
