"""Reference implementations shared by unit and acceptance tests."""

from sesinfer.geo import haversine_m


def oracle_stays(records, s_d, s_t):
    """Window-enumerating stay-point reference.

    For each anchor, every candidate window's membership condition is
    evaluated over a precomputed distance matrix; the anchor then advances
    by the same rule as the production scan. Returns comparable tuples.
    """
    n = len(records)
    dist = [[haversine_m(records[i].point, records[j].point) for j in range(n)] for i in range(n)]
    stays = []
    i = 0
    while i < n:
        last = i
        for j in range(i + 1, n):
            if all(dist[i][k] <= s_d for k in range(i + 1, j + 1)):
                last = j
            else:
                break
        if records[last].ts - records[i].ts > s_t:
            members = records[i : last + 1]
            lat = sum(r.point.lat for r in members) / len(members)
            lon = sum(r.point.lon for r in members) / len(members)
            stays.append((records[i].ts, records[last].ts, round(lat, 12), round(lon, 12), len(members)))
            i = last + 1
        else:
            i += 1
    return stays
